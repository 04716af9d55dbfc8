//! Analytical optimal policies.
//!
//! Three constrained programs over a candidate distribution admit softmax
//! closed forms:
//!
//! * RLHF / KL-minimization under a reward floor:
//!   `pi ∝ ref * exp(r / beta)`
//! * QEMPO, entropy maximization under a reward floor:
//!   `pi ∝ exp(lambda * r)` (reference-free)
//! * QEMPO-KL, entropy maximization under a reward floor and a KL budget:
//!   `pi ∝ ref^(l2/(l2+1)) * exp(l1 r / (l2+1))`
//!
//! Each policy also re-expresses its reward from the policy itself, up to
//! an additive per-instance constant ([`implied_reward`]); the tempered
//! softmax family and its entropy derivative underpin the entropy-ordering
//! facts between the three.
//!
//! All log-domain arithmetic is max-shifted; no probability is
//! exponentiated before shifting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{AlignmentInstance, PolicyDistribution};
use crate::measures::{entropy, expected_reward, kl_divergence, log_sum_exp, softmax_from_logits};

/// Which closed form, with its multipliers. Only the multipliers the method
/// actually uses exist on the variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MethodParams {
    Rlhf { beta: f64 },
    Qempo { lambda: f64 },
    QempoKl { lambda1: f64, lambda2: f64 },
}

impl MethodParams {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            MethodParams::Rlhf { beta } => *beta > 0.0,
            MethodParams::Qempo { lambda } => *lambda > 0.0,
            MethodParams::QempoKl { lambda1, lambda2 } => *lambda1 > 0.0 && *lambda2 > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "multipliers must be strictly positive: {self:?}"
            )))
        }
    }

    pub fn method_name(&self) -> &'static str {
        match self {
            MethodParams::Rlhf { .. } => "rlhf",
            MethodParams::Qempo { .. } => "qempo",
            MethodParams::QempoKl { .. } => "qempo-kl",
        }
    }
}

/// A closed-form policy together with its partition constant and summary
/// measurements against its instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosedFormResult {
    pub dist: PolicyDistribution,
    /// `ln Z` of the defining softmax.
    pub log_partition: f64,
    pub entropy: f64,
    pub expected_reward: f64,
    /// `KL(dist || ref)`. `None` when the divergence is infinite, which
    /// happens only for the reference-free policy on an instance whose
    /// reference assigns zero probability to some candidate.
    pub kl_to_ref: Option<f64>,
    /// Candidate indices forced out of the support by `ref_prob = 0`.
    /// Empty when the reference is strictly positive.
    pub support_excluded: Vec<usize>,
}

fn finish(
    inst: &AlignmentInstance,
    exponents: Vec<f64>,
    support_excluded: Vec<usize>,
) -> Result<ClosedFormResult> {
    let log_partition = log_sum_exp(&exponents);
    let probs = softmax_from_logits(&exponents)?;
    let dist = PolicyDistribution::new(inst.id.clone(), probs)?;
    let h = entropy(&dist);
    let er = expected_reward(&dist, inst)?;
    let kl_to_ref = kl_divergence(&dist, &inst.ref_policy()).ok();
    Ok(ClosedFormResult {
        dist,
        log_partition,
        entropy: h,
        expected_reward: er,
        kl_to_ref,
        support_excluded,
    })
}

fn ln_ref_with_exclusions(inst: &AlignmentInstance) -> (Vec<f64>, Vec<usize>) {
    let mut excluded = Vec::new();
    let ln_ref = inst
        .ref_probs()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if p > 0.0 {
                p.ln()
            } else {
                excluded.push(i);
                f64::NEG_INFINITY
            }
        })
        .collect();
    (ln_ref, excluded)
}

/// Reward-tilted reference policy `softmax(ln ref + r / beta)`.
pub fn rlhf_optimal(inst: &AlignmentInstance, beta: f64) -> Result<ClosedFormResult> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "beta must be strictly positive, got {beta}"
        )));
    }
    let (ln_ref, excluded) = ln_ref_with_exclusions(inst);
    let exponents: Vec<f64> = ln_ref
        .iter()
        .zip(&inst.candidates)
        .map(|(&lr, c)| lr + c.reward / beta)
        .collect();
    finish(inst, exponents, excluded)
}

/// Reference-free maximum-entropy policy `softmax(lambda * r)`.
pub fn qempo_optimal(inst: &AlignmentInstance, lambda: f64) -> Result<ClosedFormResult> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda must be strictly positive, got {lambda}"
        )));
    }
    let exponents: Vec<f64> = inst.candidates.iter().map(|c| lambda * c.reward).collect();
    finish(inst, exponents, Vec::new())
}

/// Maximum-entropy policy under both a reward floor and a KL budget:
/// `softmax((l2/(l2+1)) ln ref + (l1/(l2+1)) r)`. The fractional exponent
/// on the reference flattens it toward uniform relative to the RLHF form.
pub fn qempo_kl_optimal(
    inst: &AlignmentInstance,
    lambda1: f64,
    lambda2: f64,
) -> Result<ClosedFormResult> {
    if !(lambda1 > 0.0) || !(lambda2 > 0.0) || !lambda1.is_finite() || !lambda2.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "lambda1 and lambda2 must be strictly positive, got {lambda1}, {lambda2}"
        )));
    }
    qempo_kl_general(inst, lambda1, lambda2)
}

/// Same functional form with multipliers allowed to sit at zero; used by
/// the dual-ascent solver whose iterates live on the closed nonnegative
/// orthant. At `lambda2 = 0` the reference drops out entirely; at
/// `lambda1 = 0` the rewards drop out.
pub(crate) fn qempo_kl_general(
    inst: &AlignmentInstance,
    lambda1: f64,
    lambda2: f64,
) -> Result<ClosedFormResult> {
    let ref_weight = lambda2 / (lambda2 + 1.0);
    let reward_weight = lambda1 / (lambda2 + 1.0);
    let (ln_ref, mut excluded) = ln_ref_with_exclusions(inst);
    if ref_weight == 0.0 {
        excluded.clear();
    }
    let exponents: Vec<f64> = ln_ref
        .iter()
        .zip(&inst.candidates)
        .map(|(&lr, c)| {
            // 0 * -inf would poison the exponent with NaN.
            let ref_term = if ref_weight == 0.0 {
                0.0
            } else {
                ref_weight * lr
            };
            ref_term + reward_weight * c.reward
        })
        .collect();
    finish(inst, exponents, excluded)
}

/// The tempered family `p_i(s) ∝ exp(s z_i)`.
pub fn tempered_softmax(z: &[f64], s: f64) -> Result<Vec<f64>> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "temperature multiplier must be strictly positive, got {s}"
        )));
    }
    let scaled: Vec<f64> = z.iter().map(|&v| s * v).collect();
    softmax_from_logits(&scaled)
}

/// `dH/ds = -s * Var_{p(s)}[z]` for the tempered family: entropy never
/// rises with `s`, and is flat exactly when `z` is constant.
pub fn tempered_entropy_derivative(z: &[f64], s: f64) -> Result<f64> {
    let probs = tempered_softmax(z, s)?;
    if z.windows(2).all(|w| w[0] == w[1]) {
        // exactly zero variance; avoids rounding noise from the mean
        return Ok(0.0);
    }
    let mean: f64 = probs.iter().zip(z).map(|(&p, &v)| p * v).sum();
    let var: f64 = probs
        .iter()
        .zip(z)
        .map(|(&p, &v)| p * (v - mean) * (v - mean))
        .sum();
    Ok(-s * var)
}

/// Recovers the reward vector a closed-form policy encodes, up to an
/// additive per-instance constant (the partition terms are dropped), so
/// comparisons must happen after mean-centering:
///
/// * RLHF: `beta * ln(pi / ref)`
/// * QEMPO: `(1/lambda) * ln pi`
/// * QEMPO-KL: `(1/l1) ln pi + (l2/l1) ln(pi / ref)`
pub fn implied_reward(
    dist: &PolicyDistribution,
    inst: &AlignmentInstance,
    params: &MethodParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    if dist.len() != inst.len() {
        return Err(Error::InvalidArgument(format!(
            "distribution has {} entries but instance {:?} has {} candidates",
            dist.len(),
            inst.id,
            inst.len()
        )));
    }
    let needs_ref = !matches!(params, MethodParams::Qempo { .. });
    let ref_probs = inst.ref_probs();
    let mut out = Vec::with_capacity(dist.len());
    for (i, &p) in dist.probs.iter().enumerate() {
        if p <= 0.0 {
            return Err(Error::SupportMismatch(format!(
                "policy probability at candidate {i} is zero; implied reward undefined"
            )));
        }
        if needs_ref && ref_probs[i] <= 0.0 {
            return Err(Error::SupportMismatch(format!(
                "reference probability at candidate {i} is zero; implied reward undefined"
            )));
        }
        let v = match *params {
            MethodParams::Rlhf { beta } => beta * (p.ln() - ref_probs[i].ln()),
            MethodParams::Qempo { lambda } => p.ln() / lambda,
            MethodParams::QempoKl { lambda1, lambda2 } => {
                p.ln() / lambda1 + (lambda2 / lambda1) * (p.ln() - ref_probs[i].ln())
            }
        };
        out.push(v);
    }
    Ok(out)
}

/// Closed-form policy for arbitrary method parameters.
pub fn closed_form_policy(
    inst: &AlignmentInstance,
    params: &MethodParams,
) -> Result<ClosedFormResult> {
    params.validate()?;
    match *params {
        MethodParams::Rlhf { beta } => rlhf_optimal(inst, beta),
        MethodParams::Qempo { lambda } => qempo_optimal(inst, lambda),
        MethodParams::QempoKl { lambda1, lambda2 } => qempo_kl_optimal(inst, lambda1, lambda2),
    }
}
