//! Elementary measurements over policies: stable softmax, entropy, KL
//! divergence, expected reward, quality mass, and the decomposition of the
//! alignment objective into a diversity term and a quality term.
//!
//! Everything here is in nats. The `0 ln 0 = 0` convention applies to
//! entropy; KL raises [`Error::SupportMismatch`] on support violations
//! instead of returning infinity, so callers must handle degenerate
//! policies explicitly.

use crate::error::{Error, Result};
use crate::instance::{AlignmentInstance, PolicyDistribution};

/// Default mass allowed on the negative class by [`ideal_policy`] when the
/// caller has no opinion.
pub const DEFAULT_IDEAL_EPSILON: f64 = 0.05;

/// `ln sum_i exp(v_i)`, max-shifted. `-inf` entries are allowed and drop
/// out; at least one entry must be finite.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values
        .iter()
        .map(|&v| {
            if v == f64::NEG_INFINITY {
                0.0
            } else {
                (v - max).exp()
            }
        })
        .sum();
    max + sum.ln()
}

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::InvalidArgument("softmax of an empty vector".into()));
    }
    for (i, &v) in logits.iter().enumerate() {
        // -inf marks a candidate excluded from the support; +inf and NaN
        // are malformed input.
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::InvalidArgument(format!(
                "logits[{i}] = {v} is not finite"
            )));
        }
    }
    if logits.iter().all(|&v| v == f64::NEG_INFINITY) {
        return Err(Error::InvalidArgument(
            "all logits are -inf; empty support".into(),
        ));
    }
    Ok(())
}

/// Probabilities `exp(v_i) / Z` computed in log space (max-shifted), so
/// arbitrarily large logits never overflow.
pub fn softmax_from_logits(logits: &[f64]) -> Result<Vec<f64>> {
    check_logits(logits)?;
    let lse = log_sum_exp(logits);
    Ok(logits
        .iter()
        .map(|&v| {
            if v == f64::NEG_INFINITY {
                0.0
            } else {
                (v - lse).exp()
            }
        })
        .collect())
}

/// `ln softmax(v)`; excluded candidates stay at `-inf`.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_logits(logits)?;
    let lse = log_sum_exp(logits);
    Ok(logits.iter().map(|&v| v - lse).collect())
}

fn entropy_of(probs: &[f64]) -> f64 {
    probs
        .iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum()
}

/// Shannon entropy `H = -sum p ln p` in nats; `0 <= H <= ln n`.
pub fn entropy(dist: &PolicyDistribution) -> f64 {
    entropy_of(&dist.probs)
}

/// `KL(p || q) = sum p ln(p / q)` in nats.
///
/// Errors with [`Error::SupportMismatch`] if some `p_i > 0` where
/// `q_i = 0`.
pub fn kl_divergence(p: &PolicyDistribution, q: &PolicyDistribution) -> Result<f64> {
    kl_divergence_raw(&p.probs, &q.probs)
}

pub(crate) fn kl_divergence_raw(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidArgument(format!(
            "KL arguments have different lengths ({} vs {})",
            p.len(),
            q.len()
        )));
    }
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::SupportMismatch(format!(
                    "p[{i}] = {pi} > 0 but q[{i}] = 0"
                )));
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl)
}

/// `E_pi[r] = sum_i pi_i r_i`.
pub fn expected_reward(dist: &PolicyDistribution, inst: &AlignmentInstance) -> Result<f64> {
    if dist.len() != inst.len() {
        return Err(Error::InvalidArgument(format!(
            "distribution has {} entries but instance {:?} has {} candidates",
            dist.len(),
            inst.id,
            inst.len()
        )));
    }
    Ok(dist
        .probs
        .iter()
        .zip(&inst.candidates)
        .map(|(&p, c)| p * c.reward)
        .sum())
}

/// Total probability the policy puts on the positive class.
pub fn quality_mass(dist: &PolicyDistribution, inst: &AlignmentInstance) -> Result<f64> {
    if dist.len() != inst.len() {
        return Err(Error::InvalidArgument(format!(
            "distribution has {} entries but instance {:?} has {} candidates",
            dist.len(),
            inst.id,
            inst.len()
        )));
    }
    Ok(dist
        .probs
        .iter()
        .zip(&inst.candidates)
        .filter(|(_, c)| c.is_positive())
        .map(|(&p, _)| p)
        .sum())
}

/// The target policy that splits mass `1 - epsilon` uniformly over the
/// positive class and `epsilon` uniformly over the negative class.
///
/// Requires `0 < epsilon < 1`, both classes nonempty, and the per-candidate
/// positive mass strictly above the per-candidate negative mass.
pub fn ideal_policy(inst: &AlignmentInstance, epsilon: f64) -> Result<PolicyDistribution> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie strictly in (0, 1), got {epsilon}"
        )));
    }
    inst.require_both_classes()?;
    let positives = inst.positive_indices();
    let negatives = inst.negative_indices();
    let p_pos = (1.0 - epsilon) / positives.len() as f64;
    let p_neg = epsilon / negatives.len() as f64;
    if !(p_pos > p_neg) {
        return Err(Error::InvalidArgument(format!(
            "per-candidate positive mass {p_pos} must exceed negative mass {p_neg}; \
             lower epsilon or rebalance the classes"
        )));
    }
    let mut probs = vec![0.0; inst.len()];
    for i in positives {
        probs[i] = p_pos;
    }
    for i in negatives {
        probs[i] = p_neg;
    }
    PolicyDistribution::new(inst.id.clone(), probs)
}

/// The three terms of the alignment objective split: distance to the ideal
/// policy, policy entropy, and the quality term.
#[derive(Debug, Clone, Copy)]
pub struct KlDecomposition {
    pub kl: f64,
    pub entropy: f64,
    /// `P_w * delta + ln(eps / |Y-|)` where
    /// `delta = ln((1 - eps) / |Y+|) - ln(eps / |Y-|)`; strictly increasing
    /// in the quality mass `P_w` whenever `delta > 0`.
    pub quality_term: f64,
}

impl KlDecomposition {
    /// `kl + entropy + quality_term`; zero (to rounding) by construction.
    pub fn identity_residual(&self) -> f64 {
        self.kl + self.entropy + self.quality_term
    }
}

/// Splits `KL(dist || ideal)` into `-entropy(dist) - quality_term`, making
/// the quality/diversity trade explicit: minimizing the KL is the same as
/// jointly raising entropy and quality mass.
pub fn alignment_kl_decomposition(
    dist: &PolicyDistribution,
    inst: &AlignmentInstance,
    epsilon: f64,
) -> Result<KlDecomposition> {
    let ideal = ideal_policy(inst, epsilon)?;
    let kl = kl_divergence(dist, &ideal)?;
    let h = entropy(dist);
    let p_w = quality_mass(dist, inst)?;
    let ln_pos = ((1.0 - epsilon) / inst.positive_indices().len() as f64).ln();
    let ln_neg = (epsilon / inst.negative_indices().len() as f64).ln();
    let quality_term = p_w * (ln_pos - ln_neg) + ln_neg;
    Ok(KlDecomposition {
        kl,
        entropy: h,
        quality_term,
    })
}

/// The plain policy-gradient objective `sum_i r_i pi_i`. With 0/1 quality
/// rewards this coincides exactly with [`quality_mass`]: reward
/// maximization alone moves only the quality component.
pub fn policy_gradient_objective(
    dist: &PolicyDistribution,
    inst: &AlignmentInstance,
) -> Result<f64> {
    expected_reward(dist, inst)
}

/// Subtracts the mean; used wherever two quantities are compared only up to
/// an additive per-instance constant.
pub fn mean_center(values: &[f64]) -> Vec<f64> {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| v - mean).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{CandidateOutcome, Quality};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn inst_with(rewards: &[f64], quality: &[Quality], ref_probs: &[f64]) -> AlignmentInstance {
        let candidates = rewards
            .iter()
            .zip(quality)
            .zip(ref_probs)
            .map(|((&reward, &quality), &ref_prob)| CandidateOutcome {
                label: None,
                reward,
                quality,
                ref_prob,
            })
            .collect();
        AlignmentInstance::new("t", candidates).unwrap()
    }

    fn dist(probs: &[f64]) -> PolicyDistribution {
        PolicyDistribution::new("t", probs.to_vec()).unwrap()
    }

    use Quality::{Negative as Neg, Positive as Pos};

    #[test]
    fn softmax_symmetry_and_direct_value() {
        let p = softmax_from_logits(&[0.0, 0.0, 0.0]).unwrap();
        for v in &p {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        let p = softmax_from_logits(&[1.0, 0.0]).unwrap();
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(p[0], e / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 1.0 / (e + 1.0), epsilon = 1e-15);
    }

    #[test]
    fn softmax_is_overflow_safe() {
        let p = softmax_from_logits(&[1000.0, 0.0]).unwrap();
        assert_eq!(p[0], 1.0);
        assert_eq!(p[1], 0.0);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax_from_logits(&[f64::NAN, 0.0]).is_err());
        assert!(softmax_from_logits(&[f64::INFINITY, 0.0]).is_err());
        assert!(softmax_from_logits(&[]).is_err());
        // -inf marks excluded support, not an error
        let p = softmax_from_logits(&[0.0, f64::NEG_INFINITY]).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
        assert!(softmax_from_logits(&[f64::NEG_INFINITY; 2]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(entropy(&dist(&[0.25; 4])), 4.0_f64.ln(), epsilon = 1e-12);
        assert_eq!(entropy(&dist(&[1.0, 0.0, 0.0])), 0.0);
        // entropy of [sigma(1), 1 - sigma(1)]
        let s = 1.0 / (1.0 + (-1.0f64).exp());
        assert_abs_diff_eq!(
            entropy(&dist(&[s, 1.0 - s])),
            0.5822031088882179,
            epsilon = 1e-12
        );
    }

    #[test]
    fn kl_examples() {
        let u = dist(&[1.0 / 3.0; 3]);
        assert_abs_diff_eq!(kl_divergence(&u, &u).unwrap(), 0.0, epsilon = 1e-15);
        let v = kl_divergence(&dist(&[0.75, 0.25]), &dist(&[0.9, 0.1])).unwrap();
        assert_abs_diff_eq!(v, 0.0923, epsilon = 5e-5);
        let err = kl_divergence(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::SupportMismatch(_)));
    }

    #[test]
    fn expected_reward_examples() {
        let inst = inst_with(&[1.0, 0.0], &[Pos, Neg], &[0.5, 0.5]);
        assert_abs_diff_eq!(
            expected_reward(&dist(&[0.5, 0.5]), &inst).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            expected_reward(&dist(&[0.7311, 0.2689]), &inst).unwrap(),
            0.7311,
            epsilon = 1e-12
        );
        let inst3 = inst_with(&[3.0, 7.0, 9.0], &[Pos, Neg, Neg], &[0.4, 0.3, 0.3]);
        assert_eq!(
            expected_reward(&dist(&[1.0, 0.0, 0.0]), &inst3).unwrap(),
            3.0
        );
        assert!(expected_reward(&dist(&[0.5, 0.5]), &inst3).is_err());
    }

    #[test]
    fn quality_mass_examples() {
        let all_pos = inst_with(&[1.0, 1.0], &[Pos, Pos], &[0.5, 0.5]);
        assert_abs_diff_eq!(
            quality_mass(&dist(&[0.3, 0.7]), &all_pos).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let half = inst_with(&[1.0, 1.0, 0.0, 0.0], &[Pos, Pos, Neg, Neg], &[0.25; 4]);
        assert_abs_diff_eq!(
            quality_mass(&dist(&[0.25; 4]), &half).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        let three = inst_with(&[1.0, 1.0, 0.0], &[Pos, Pos, Neg], &[0.4, 0.3, 0.3]);
        assert_abs_diff_eq!(
            quality_mass(&dist(&[0.7, 0.2, 0.1]), &three).unwrap(),
            0.9,
            epsilon = 1e-15
        );
    }

    #[test]
    fn ideal_policy_examples() {
        let inst = inst_with(&[1.0, 1.0, 0.0, 0.0], &[Pos, Pos, Neg, Neg], &[0.25; 4]);
        let ideal = ideal_policy(&inst, 0.1).unwrap();
        assert_eq!(ideal.probs, vec![0.45, 0.45, 0.05, 0.05]);

        let inst = inst_with(&[1.0, 0.0, 0.0, 0.0], &[Pos, Neg, Neg, Neg], &[0.25; 4]);
        let ideal = ideal_policy(&inst, 0.3).unwrap();
        assert_abs_diff_eq!(ideal.probs[0], 0.7, epsilon = 1e-15);
        for i in 1..4 {
            assert_abs_diff_eq!(ideal.probs[i], 0.1, epsilon = 1e-15);
        }

        assert!(ideal_policy(&inst, 0.0).is_err());
        assert!(ideal_policy(&inst, 1.0).is_err());
        let one_sided = inst_with(&[1.0, 1.0], &[Pos, Pos], &[0.5, 0.5]);
        assert!(ideal_policy(&one_sided, 0.1).is_err());
    }

    #[test]
    fn decomposition_examples() {
        let inst = inst_with(&[1.0, 1.0, 0.0, 0.0], &[Pos, Pos, Neg, Neg], &[0.25; 4]);
        let d = alignment_kl_decomposition(&dist(&[0.25; 4]), &inst, 0.1).unwrap();
        assert_abs_diff_eq!(d.kl, 0.5108, epsilon = 5e-5);
        assert_abs_diff_eq!(d.entropy, 1.3863, epsilon = 5e-5);
        assert_abs_diff_eq!(d.quality_term, -1.8971, epsilon = 5e-5);
        assert!(d.identity_residual().abs() < 1e-9);

        // dist equal to the ideal policy: KL vanishes
        let ideal = ideal_policy(&inst, 0.1).unwrap();
        let d = alignment_kl_decomposition(&ideal, &inst, 0.1).unwrap();
        assert_abs_diff_eq!(d.kl, 0.0, epsilon = 1e-12);
        assert!(d.identity_residual().abs() < 1e-9);

        // point mass on a positive candidate
        let d = alignment_kl_decomposition(&dist(&[1.0, 0.0, 0.0, 0.0]), &inst, 0.1).unwrap();
        assert_abs_diff_eq!(d.kl, -(0.45_f64.ln()), epsilon = 1e-12);
        assert_eq!(d.entropy, 0.0);
        assert!(d.identity_residual().abs() < 1e-9);
    }

    #[test]
    fn policy_gradient_matches_quality_mass_on_binary_rewards() {
        let inst = inst_with(&[1.0, 1.0, 0.0, 0.0], &[Pos, Pos, Neg, Neg], &[0.25; 4]);
        let d = dist(&[0.25; 4]);
        assert_eq!(
            policy_gradient_objective(&d, &inst).unwrap(),
            quality_mass(&d, &inst).unwrap()
        );
        let inst3 = inst_with(&[1.0, 1.0, 0.0], &[Pos, Pos, Neg], &[0.4, 0.3, 0.3]);
        let d3 = dist(&[0.7, 0.2, 0.1]);
        assert_eq!(
            policy_gradient_objective(&d3, &inst3).unwrap(),
            quality_mass(&d3, &inst3).unwrap()
        );
        // general rewards: plain dot product, no identity claimed
        let gen = inst_with(&[2.0, 1.0], &[Pos, Neg], &[0.5, 0.5]);
        assert_abs_diff_eq!(
            policy_gradient_objective(&dist(&[0.5, 0.5]), &gen).unwrap(),
            1.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn quality_term_increases_with_quality_mass() {
        let inst = inst_with(&[1.0, 1.0, 0.0, 0.0], &[Pos, Pos, Neg, Neg], &[0.25; 4]);
        let mut last = f64::NEG_INFINITY;
        for step in 1..20 {
            let p_w = step as f64 / 20.0;
            let probs = [p_w / 2.0, p_w / 2.0, (1.0 - p_w) / 2.0, (1.0 - p_w) / 2.0];
            let d = alignment_kl_decomposition(&dist(&probs), &inst, 0.1).unwrap();
            assert!(d.quality_term > last);
            last = d.quality_term;
        }
    }

    proptest! {
        #[test]
        fn softmax_translation_invariance(
            logits in proptest::collection::vec(-30.0..30.0f64, 2..8),
            shift in -50.0..50.0f64,
        ) {
            let base = softmax_from_logits(&logits).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
            let moved = softmax_from_logits(&shifted).unwrap();
            for (a, b) in base.iter().zip(&moved) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let total: f64 = base.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn entropy_bounds_hold(
            logits in proptest::collection::vec(-10.0..10.0f64, 2..8),
        ) {
            let probs = softmax_from_logits(&logits).unwrap();
            let d = PolicyDistribution::new("t", probs).unwrap();
            let h = entropy(&d);
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (d.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn kl_nonnegative_and_zero_iff_equal(
            (a, b) in (2..8usize).prop_flat_map(|n| (
                proptest::collection::vec(-5.0..5.0f64, n),
                proptest::collection::vec(-5.0..5.0f64, n),
            )),
        ) {
            let p = PolicyDistribution::new("t", softmax_from_logits(&a).unwrap()).unwrap();
            let q = PolicyDistribution::new("t", softmax_from_logits(&b).unwrap()).unwrap();
            let kl = kl_divergence(&p, &q).unwrap();
            prop_assert!(kl >= -1e-15);
            let self_kl = kl_divergence(&p, &p).unwrap();
            prop_assert!(self_kl.abs() < 1e-9);
            let max_gap = p.probs.iter().zip(&q.probs)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            if kl < 1e-12 {
                prop_assert!(max_gap < 1e-4);
            }
        }

        #[test]
        fn decomposition_identity_holds(
            logits in proptest::collection::vec(-4.0..4.0f64, 4..7),
            eps in 0.01..0.2f64,
            split in 1..3usize,
        ) {
            let n = logits.len();
            let probs = softmax_from_logits(&logits).unwrap();
            let candidates: Vec<_> = (0..n).map(|i| CandidateOutcome {
                label: None,
                reward: if i < split { 1.0 } else { 0.0 },
                quality: if i < split { Pos } else { Neg },
                ref_prob: 1.0 / n as f64,
            }).collect();
            let inst = AlignmentInstance::new("t", candidates).unwrap();
            let d = PolicyDistribution::new("t", probs).unwrap();
            let dec = alignment_kl_decomposition(&d, &inst, eps).unwrap();
            prop_assert!(dec.identity_residual().abs() < 1e-9);
        }
    }
}
