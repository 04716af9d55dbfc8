//! Shared evaluation measurements: pass@k and entropy/quality frontier
//! sweeps over multiplier grids.

use serde::{Deserialize, Serialize};

use crate::closed_form::{closed_form_policy, MethodParams};
use crate::error::{Error, Result};
use crate::instance::AlignmentInstance;
use crate::measures::quality_mass;

/// Inverse-multiplier grid used by the default offline frontier preset.
pub const OFFLINE_INV_LAMBDA_GRID: [f64; 5] = [1e-2, 6e-3, 4e-3, 2e-3, 1e-3];

/// Counts feeding the pass@k estimator: `samples` draws, `correct` of them
/// correct, target `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassAtKInput {
    pub samples: usize,
    pub correct: usize,
    pub k: usize,
}

/// Unbiased estimator `1 - C(n - c, k) / C(n, k)` of the probability that
/// at least one of `k` draws (without replacement from the `n` observed
/// samples) is correct. The binomial ratio is accumulated in log space so
/// large `n` cannot overflow.
pub fn pass_at_k(input: PassAtKInput) -> Result<f64> {
    let PassAtKInput {
        samples: n,
        correct: c,
        k,
    } = input;
    if c > n {
        return Err(Error::InvalidArgument(format!(
            "correct count {c} exceeds sample count {n}"
        )));
    }
    if k < 1 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k must lie in 1..={n}, got {k}"
        )));
    }
    if n - c < k {
        // Every k-subset hits a correct sample.
        return Ok(1.0);
    }
    // C(n-c, k) / C(n, k) = prod_{i=0}^{k-1} (n - c - i) / (n - i)
    let mut log_ratio = 0.0;
    for i in 0..k {
        log_ratio += ((n - c - i) as f64).ln() - ((n - i) as f64).ln();
    }
    Ok(1.0 - log_ratio.exp())
}

/// One multiplier setting on a method's entropy/quality trade-off curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontierPoint {
    #[serde(flatten)]
    pub params: MethodParams,
    pub entropy: f64,
    pub expected_reward: f64,
    pub quality_mass: f64,
}

/// Evaluates the closed-form policy at every grid point and records its
/// entropy, expected reward, and quality mass. Along an increasing QEMPO
/// `lambda` grid the entropy is nonincreasing and the expected reward
/// nondecreasing.
pub fn frontier_sweep(
    inst: &AlignmentInstance,
    grid: &[MethodParams],
) -> Result<Vec<FrontierPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty multiplier grid".into()));
    }
    grid.iter()
        .map(|params| {
            let cf = closed_form_policy(inst, params)?;
            Ok(FrontierPoint {
                params: *params,
                entropy: cf.entropy,
                expected_reward: cf.expected_reward,
                quality_mass: quality_mass(&cf.dist, inst)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{CandidateOutcome, Quality};
    use approx::assert_abs_diff_eq;

    #[test]
    fn pass_at_k_edges() {
        assert_eq!(
            pass_at_k(PassAtKInput {
                samples: 10,
                correct: 0,
                k: 3
            })
            .unwrap(),
            0.0
        );
        assert_eq!(
            pass_at_k(PassAtKInput {
                samples: 10,
                correct: 10,
                k: 1
            })
            .unwrap(),
            1.0
        );
        assert_abs_diff_eq!(
            pass_at_k(PassAtKInput {
                samples: 4,
                correct: 2,
                k: 2
            })
            .unwrap(),
            1.0 - 1.0 / 6.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pass_at_k_rejects_bad_counts() {
        assert!(pass_at_k(PassAtKInput {
            samples: 4,
            correct: 5,
            k: 1
        })
        .is_err());
        assert!(pass_at_k(PassAtKInput {
            samples: 4,
            correct: 2,
            k: 0
        })
        .is_err());
        assert!(pass_at_k(PassAtKInput {
            samples: 4,
            correct: 2,
            k: 5
        })
        .is_err());
    }

    #[test]
    fn pass_at_k_large_n_stays_finite() {
        let v = pass_at_k(PassAtKInput {
            samples: 10_000,
            correct: 17,
            k: 100,
        })
        .unwrap();
        assert!(v.is_finite());
        assert!(v > 0.0 && v < 1.0);
    }

    /// Exhaustive monotonicity: nondecreasing in k and c, nonincreasing in
    /// n at fixed c.
    #[test]
    fn pass_at_k_monotonicity_small_n() {
        for n in 1..=20usize {
            for c in 0..=n {
                for k in 1..=n {
                    let v = pass_at_k(PassAtKInput {
                        samples: n,
                        correct: c,
                        k,
                    })
                    .unwrap();
                    if k > 1 {
                        let prev = pass_at_k(PassAtKInput {
                            samples: n,
                            correct: c,
                            k: k - 1,
                        })
                        .unwrap();
                        assert!(v >= prev - 1e-12, "k monotonicity at n={n} c={c} k={k}");
                    }
                    if c > 0 {
                        let prev = pass_at_k(PassAtKInput {
                            samples: n,
                            correct: c - 1,
                            k,
                        })
                        .unwrap();
                        assert!(v >= prev - 1e-12, "c monotonicity at n={n} c={c} k={k}");
                    }
                    if n > k && c < n {
                        let prev = pass_at_k(PassAtKInput {
                            samples: n - 1,
                            correct: c,
                            k,
                        })
                        .unwrap();
                        assert!(v <= prev + 1e-12, "n monotonicity at n={n} c={c} k={k}");
                    }
                }
            }
        }
    }

    fn inst(rewards: &[f64]) -> AlignmentInstance {
        let n = rewards.len();
        let candidates = rewards
            .iter()
            .enumerate()
            .map(|(i, &reward)| CandidateOutcome {
                label: None,
                reward,
                quality: if i == 0 {
                    Quality::Positive
                } else {
                    Quality::Negative
                },
                ref_prob: 1.0 / n as f64,
            })
            .collect();
        AlignmentInstance::new("t", candidates).unwrap()
    }

    #[test]
    fn qempo_frontier_is_monotone() {
        let i = inst(&[1.0, 0.4, 0.0]);
        let grid: Vec<MethodParams> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&lambda| MethodParams::Qempo { lambda })
            .collect();
        let points = frontier_sweep(&i, &grid).unwrap();
        for w in points.windows(2) {
            assert!(w[1].entropy < w[0].entropy);
            assert!(w[1].expected_reward >= w[0].expected_reward);
        }
    }

    #[test]
    fn constant_rewards_give_a_flat_frontier() {
        let i = inst(&[0.7, 0.7, 0.7]);
        let grid: Vec<MethodParams> = OFFLINE_INV_LAMBDA_GRID
            .iter()
            .map(|&inv| MethodParams::Qempo { lambda: 1.0 / inv })
            .collect();
        let points = frontier_sweep(&i, &grid).unwrap();
        for p in &points {
            assert_abs_diff_eq!(p.entropy, 3.0f64.ln(), epsilon = 1e-12);
            assert_abs_diff_eq!(p.expected_reward, 0.7, epsilon = 1e-12);
        }
        assert!(frontier_sweep(&i, &[]).is_err());
    }
}
