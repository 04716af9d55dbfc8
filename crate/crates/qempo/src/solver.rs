//! Constraint solvers: turn reward floors and KL budgets into concrete
//! multiplier values.
//!
//! The multiplier of a reward-floor program is found by bisection, using
//! the fact that the expected reward of `softmax(lambda r)` is nondecreasing
//! in `lambda` (strictly when rewards are not constant). The (reward, KL)
//! pair of the two-constraint program is found by two nested monotone
//! searches: the inner binds the reward floor in `lambda1`, the outer binds
//! the KL budget in `lambda2` (the KL of the inner solution is a
//! nonincreasing function of `lambda2`, the usual regularization-path
//! monotonicity).
//!
//! The programs pose inequality constraints, so the solvers distinguish a
//! slack constraint (multiplier pinned at zero) from a binding one; a floor
//! above the best attainable reward is reported infeasible rather than
//! raised, and levels reachable only in a diverging-multiplier limit (a
//! floor exactly at the maximum reward, or a budget exactly on the
//! reward/KL frontier) return the limiting policy with a saturated status
//! instead of failing.

use serde::{Deserialize, Serialize};

use crate::closed_form::{qempo_kl_general, rlhf_optimal};
use crate::error::{Error, Result};
use crate::instance::{AlignmentInstance, PolicyDistribution};
use crate::measures::{expected_reward, kl_divergence, softmax_from_logits};

/// Solver residual tolerance used when the caller has no
/// opinion.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Iteration cap for the two-multiplier solve when the caller has no
/// opinion (counted as inner reward-binding solves).
pub const DEFAULT_MAX_ITERS: usize = 10_000;

/// Multiplier magnitude past which a reward floor is treated as
/// numerically saturated (the policy is already the argmax-uniform limit).
const LAMBDA_SATURATION: f64 = 1e6;

/// The constraint levels of the entropy-maximization programs: a reward
/// floor, and optionally a KL budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub reward_floor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_budget: Option<f64>,
}

impl ConstraintSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.kl_budget {
            if !(k >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "KL budget must be nonnegative, got {k}"
                )));
            }
        }
        if !self.reward_floor.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "reward floor must be finite, got {}",
                self.reward_floor
            )));
        }
        Ok(())
    }
}

/// How a constraint ended up at the solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintStatus {
    /// Inactive; its multiplier is zero.
    Slack,
    /// Active within tolerance; its multiplier is positive.
    Binding,
    /// No policy satisfies it.
    Infeasible,
    /// Satisfiable only in the diverging-multiplier limit; the limiting
    /// policy is returned with the multiplier capped.
    Saturated,
}

/// Outcome of a single-multiplier reward-floor solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QempoSolve {
    pub lambda: f64,
    pub dist: PolicyDistribution,
    pub status: ConstraintStatus,
    /// `E[r] - R` at the returned policy.
    pub reward_residual: f64,
    pub iterations: usize,
}

/// Outcome of a two-multiplier (reward floor, KL budget) solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QempoKlSolve {
    pub lambda1: f64,
    pub lambda2: f64,
    pub dist: PolicyDistribution,
    pub reward_status: ConstraintStatus,
    pub kl_status: ConstraintStatus,
    /// `E[r] - R` at the returned policy.
    pub reward_residual: f64,
    /// `K - KL(pi || ref)` at the returned policy.
    pub kl_residual: f64,
    pub iterations: usize,
}

/// Levels `(R, K)` induced by the RLHF solution at inverse temperature
/// `beta`: the floor is its expected reward and the budget is its KL to the
/// reference. The RLHF policy itself is feasible at these levels by
/// construction.
pub fn constraint_levels(inst: &AlignmentInstance, beta: f64) -> Result<ConstraintSpec> {
    let anchor = rlhf_optimal(inst, beta)?;
    let kl = anchor.kl_to_ref.ok_or_else(|| {
        Error::SupportMismatch(format!(
            "instance {:?}: KL to the reference is undefined",
            inst.id
        ))
    })?;
    Ok(ConstraintSpec {
        reward_floor: anchor.expected_reward,
        kl_budget: Some(kl),
    })
}

fn expected_reward_at_lambda(rewards: &[f64], lambda: f64) -> Result<f64> {
    let exponents: Vec<f64> = rewards.iter().map(|&r| lambda * r).collect();
    let probs = softmax_from_logits(&exponents)?;
    Ok(probs.iter().zip(rewards).map(|(&p, &r)| p * r).sum())
}

fn qempo_dist(inst: &AlignmentInstance, lambda: f64) -> Result<PolicyDistribution> {
    let exponents: Vec<f64> = inst.candidates.iter().map(|c| lambda * c.reward).collect();
    PolicyDistribution::new(inst.id.clone(), softmax_from_logits(&exponents)?)
}

/// Uniform distribution over the argmax-reward candidates: the
/// entropy-maximal policy when the floor sits exactly at the maximum
/// reward.
fn argmax_uniform(inst: &AlignmentInstance) -> Result<PolicyDistribution> {
    let max = inst.max_reward();
    let hits: Vec<usize> = inst
        .candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.reward == max)
        .map(|(i, _)| i)
        .collect();
    let mut probs = vec![0.0; inst.len()];
    for &i in &hits {
        probs[i] = 1.0 / hits.len() as f64;
    }
    PolicyDistribution::new(inst.id.clone(), probs)
}

/// Finds `lambda >= 0` such that the expected reward of
/// `softmax(lambda r)` meets the floor `reward_floor` within `tol`
/// (bisection on the monotone map `lambda -> E[r]`).
pub fn solve_qempo_multiplier(
    inst: &AlignmentInstance,
    reward_floor: f64,
    tol: f64,
) -> Result<QempoSolve> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be strictly positive, got {tol}"
        )));
    }
    let rewards = inst.rewards();
    let max_reward = inst.max_reward();

    if reward_floor > max_reward {
        // Best attainable expectation is max r; report rather than raise.
        let dist = argmax_uniform(inst)?;
        return Ok(QempoSolve {
            lambda: 0.0,
            dist,
            status: ConstraintStatus::Infeasible,
            reward_residual: max_reward - reward_floor,
            iterations: 0,
        });
    }

    let uniform_mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    if uniform_mean >= reward_floor {
        // The unconstrained entropy maximum already satisfies the floor.
        let dist = PolicyDistribution::uniform(inst.id.clone(), inst.len())?;
        return Ok(QempoSolve {
            lambda: 0.0,
            dist,
            status: ConstraintStatus::Slack,
            reward_residual: uniform_mean - reward_floor,
            iterations: 0,
        });
    }

    if reward_floor == max_reward {
        let dist = argmax_uniform(inst)?;
        return Ok(QempoSolve {
            lambda: LAMBDA_SATURATION,
            dist,
            status: ConstraintStatus::Saturated,
            reward_residual: 0.0,
            iterations: 0,
        });
    }

    // Bracket: double from 1 until the floor is reachable.
    let mut iterations = 0;
    let mut hi = 1.0;
    while expected_reward_at_lambda(&rewards, hi)? < reward_floor - tol {
        hi *= 2.0;
        iterations += 1;
        if hi > LAMBDA_SATURATION {
            let dist = argmax_uniform(inst)?;
            let er = expected_reward(&dist, inst)?;
            return Ok(QempoSolve {
                lambda: LAMBDA_SATURATION,
                dist,
                status: ConstraintStatus::Saturated,
                reward_residual: er - reward_floor,
                iterations,
            });
        }
    }

    let mut lo = 0.0;
    let mut lambda = hi;
    let mut value = expected_reward_at_lambda(&rewards, lambda)?;
    while (value - reward_floor).abs() > tol {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break; // bracket exhausted at f64 resolution
        }
        let at_mid = expected_reward_at_lambda(&rewards, mid)?;
        if at_mid < reward_floor {
            lo = mid;
        } else {
            hi = mid;
        }
        lambda = hi;
        value = expected_reward_at_lambda(&rewards, lambda)?;
        iterations += 1;
    }

    let dist = qempo_dist(inst, lambda)?;
    let er = expected_reward(&dist, inst)?;
    Ok(QempoSolve {
        lambda,
        dist,
        status: ConstraintStatus::Binding,
        reward_residual: er - reward_floor,
        iterations,
    })
}

/// Multiplier magnitude past which the KL budget is treated as numerically
/// saturated. Degenerate levels sitting exactly on the reward/KL trade-off
/// frontier (for example levels read off an RLHF policy) leave a feasible
/// set with empty interior, so the exact multipliers diverge; the policy
/// itself still converges, at rate `O(1 / lambda2)`, and this cap puts the
/// remaining constraint residual well below any tolerance the suite uses.
const LAMBDA2_SATURATION: f64 = 1e12;

struct KlEvaluation {
    lambda1: f64,
    lambda2: f64,
    dist: PolicyDistribution,
    expected_reward: f64,
    kl: f64,
}

fn evaluate_pair(
    inst: &AlignmentInstance,
    lambda1: f64,
    lambda2: f64,
) -> Result<(PolicyDistribution, f64, f64)> {
    let cf = qempo_kl_general(inst, lambda1, lambda2)?;
    let kl = cf.kl_to_ref.ok_or_else(|| {
        Error::SupportMismatch(format!(
            "instance {:?}: the two-constraint solve needs a reference \
             covering every candidate",
            inst.id
        ))
    })?;
    Ok((cf.dist, cf.expected_reward, kl))
}

/// For fixed `lambda2`, finds the smallest `lambda1 >= 0` whose policy
/// meets the reward floor within `tol`, exploiting monotonicity of the
/// expected reward in `lambda1`.
fn bind_reward_multiplier(
    inst: &AlignmentInstance,
    lambda2: f64,
    reward_floor: f64,
    tol: f64,
) -> Result<KlEvaluation> {
    let eval = |lambda1: f64| -> Result<(PolicyDistribution, f64, f64)> {
        evaluate_pair(inst, lambda1, lambda2)
    };

    let (dist, er, kl) = eval(0.0)?;
    if er >= reward_floor {
        return Ok(KlEvaluation {
            lambda1: 0.0,
            lambda2,
            dist,
            expected_reward: er,
            kl,
        });
    }

    // Bracket: the reward weight is lambda1 / (lambda2 + 1), so start the
    // doubling at a multiplier giving weight one.
    let mut hi = lambda2 + 1.0;
    loop {
        let (_, er, _) = eval(hi)?;
        if er >= reward_floor - tol {
            break;
        }
        hi *= 2.0;
        if hi > LAMBDA_SATURATION * (lambda2 + 1.0) {
            // floor only reachable in the argmax limit
            let (dist, er, kl) = eval(hi)?;
            return Ok(KlEvaluation {
                lambda1: hi,
                lambda2,
                dist,
                expected_reward: er,
                kl,
            });
        }
    }

    let mut lo = 0.0;
    let mut best = eval(hi)?;
    let mut lambda1 = hi;
    while (best.1 - reward_floor).abs() > tol {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let at_mid = eval(mid)?;
        if at_mid.1 < reward_floor {
            lo = mid;
        } else {
            hi = mid;
            lambda1 = mid;
            best = at_mid;
        }
    }
    Ok(KlEvaluation {
        lambda1,
        lambda2,
        dist: best.0,
        expected_reward: best.1,
        kl: best.2,
    })
}

/// Finds `(lambda1, lambda2) >= 0` for the program "maximize entropy
/// subject to an expected-reward floor and a KL budget".
///
/// The solve nests two monotone one-dimensional searches: the inner one
/// binds the reward floor in `lambda1` (expected reward rises with
/// `lambda1`), the outer one binds the KL budget in `lambda2` (the KL of
/// the inner solution falls as `lambda2` rises). Terminates when
/// complementary slackness holds within `tol`: each constraint either
/// binds within `tol` or carries a zero multiplier. Levels sitting exactly
/// on the reward/KL frontier have diverging multipliers; past
/// the saturation cap (1e12) the budget is reported [`ConstraintStatus::Saturated`]
/// with the limiting policy.
///
/// `max_iters` caps the number of closed-form evaluations; exceeding it is
/// an [`Error::ConvergenceFailure`] carrying the last iterate and
/// residuals.
pub fn solve_qempo_kl_multipliers(
    inst: &AlignmentInstance,
    spec: &ConstraintSpec,
    tol: f64,
    max_iters: usize,
) -> Result<QempoKlSolve> {
    spec.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be strictly positive, got {tol}"
        )));
    }
    let kl_budget = spec.kl_budget.ok_or_else(|| {
        Error::InvalidArgument("two-constraint solve requires a KL budget".into())
    })?;

    let max_reward = inst.max_reward();
    if spec.reward_floor > max_reward {
        let dist = argmax_uniform(inst)?;
        let kl = kl_divergence(&dist, &inst.ref_policy()).unwrap_or(f64::INFINITY);
        return Ok(QempoKlSolve {
            lambda1: 0.0,
            lambda2: 0.0,
            dist,
            reward_status: ConstraintStatus::Infeasible,
            kl_status: ConstraintStatus::Slack,
            reward_residual: max_reward - spec.reward_floor,
            kl_residual: kl_budget - kl,
            iterations: 0,
        });
    }

    // One "iteration" is one inner reward-binding solve.
    let mut iterations = 0usize;
    let run_inner = |lambda2: f64, iterations: &mut usize| -> Result<KlEvaluation> {
        *iterations += 1;
        let eval = bind_reward_multiplier(inst, lambda2, spec.reward_floor, tol)?;
        if *iterations > max_iters {
            return Err(Error::ConvergenceFailure {
                iterations: *iterations,
                lambda1: eval.lambda1,
                lambda2: eval.lambda2,
                reward_residual: eval.expected_reward - spec.reward_floor,
                kl_residual: kl_budget - eval.kl,
            });
        }
        Ok(eval)
    };

    let classify = |multiplier: f64| -> ConstraintStatus {
        if multiplier == 0.0 {
            ConstraintStatus::Slack
        } else {
            ConstraintStatus::Binding
        }
    };
    let finish =
        |eval: KlEvaluation, kl_status: ConstraintStatus, iterations: usize| QempoKlSolve {
            lambda1: eval.lambda1,
            lambda2: eval.lambda2,
            reward_status: classify(eval.lambda1),
            kl_status,
            reward_residual: eval.expected_reward - spec.reward_floor,
            kl_residual: kl_budget - eval.kl,
            dist: eval.dist,
            iterations,
        };

    // KL slack at lambda2 = 0?
    let at_zero = run_inner(0.0, &mut iterations)?;
    if at_zero.kl <= kl_budget + tol {
        return Ok(finish(at_zero, ConstraintStatus::Slack, iterations));
    }

    // Bracket the budget in lambda2; the inner solution's KL is
    // nonincreasing in lambda2.
    let mut hi = 1.0;
    loop {
        let at_hi = run_inner(hi, &mut iterations)?;
        if at_hi.kl <= kl_budget + tol {
            break;
        }
        hi *= 4.0;
        if hi > LAMBDA2_SATURATION {
            let at_cap = run_inner(LAMBDA2_SATURATION, &mut iterations)?;
            return Ok(finish(at_cap, ConstraintStatus::Saturated, iterations));
        }
    }

    let mut lo = 0.0;
    let mut best = run_inner(hi, &mut iterations)?;
    while (best.kl - kl_budget).abs() > tol {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let at_mid = run_inner(mid, &mut iterations)?;
        if at_mid.kl > kl_budget {
            lo = mid;
        } else {
            hi = mid;
            best = at_mid;
        }
    }
    Ok(finish(best, ConstraintStatus::Binding, iterations))
}

/// A KL budget that exercises the two-constraint program without
/// degenerating: the span of feasible KL values at the reward floor runs
/// from the RLHF anchor's KL (the minimum, by the KL-minimization
/// optimality) up to the floor-only entropy maximizer's KL. The budget
/// sits halfway when that span is wide, and at least `min_width` above
/// the minimum otherwise so that certification grids always find feasible
/// points; a budget past the span's top simply leaves the KL constraint
/// slack.
pub fn interior_kl_budget(
    inst: &AlignmentInstance,
    beta: f64,
    tol: f64,
    min_width: f64,
) -> Result<f64> {
    let levels = constraint_levels(inst, beta)?;
    let kl_min = levels
        .kl_budget
        .expect("constraint_levels always sets a budget");
    let floor_only = solve_qempo_multiplier(inst, levels.reward_floor, tol)?;
    let kl_floor_only = kl_divergence(&floor_only.dist, &inst.ref_policy())?;
    Ok(kl_min + (0.5 * (kl_floor_only - kl_min)).max(min_width))
}

/// Which constrained program a policy claims to solve, with its
/// multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "program", rename_all = "kebab-case")]
pub enum KktProgram {
    /// Minimize `KL(pi || ref)` subject to the reward floor.
    KlMin { lambda: f64 },
    /// Maximize entropy subject to the reward floor.
    EntropyMax { lambda: f64 },
    /// Maximize entropy subject to the reward floor and the KL budget.
    EntropyMaxWithKl { lambda1: f64, lambda2: f64 },
}

/// One KKT condition: pass/fail plus the measured residual.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KktCondition {
    pub passed: bool,
    pub residual: f64,
}

/// Structured result of checking all four KKT conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity: KktCondition,
    pub primal_feasibility: KktCondition,
    pub dual_feasibility: KktCondition,
    pub complementary_slackness: KktCondition,
}

impl KktReport {
    pub fn passed(&self) -> bool {
        self.stationarity.passed
            && self.primal_feasibility.passed
            && self.dual_feasibility.passed
            && self.complementary_slackness.passed
    }
}

/// Checks stationarity (the program's closed-form functional equation holds
/// pointwise), primal feasibility, dual feasibility, and complementary
/// slackness for `dist` against `spec`, all within `tol`.
///
/// Stationarity is measured as the spread (max minus min) of the quantity
/// the first-order condition says must be constant across candidates:
///
/// * KL-minimization: `ln pi - ln ref - lambda r`
/// * entropy-max:     `ln pi - lambda r`
/// * entropy-max+KL:  `(1 + l2) ln pi - l2 ln ref - l1 r`
pub fn verify_kkt(
    inst: &AlignmentInstance,
    dist: &PolicyDistribution,
    spec: &ConstraintSpec,
    program: &KktProgram,
    tol: f64,
) -> Result<KktReport> {
    if dist.len() != inst.len() {
        return Err(Error::InvalidArgument(format!(
            "distribution has {} entries but instance {:?} has {} candidates",
            dist.len(),
            inst.id,
            inst.len()
        )));
    }
    if dist.probs.iter().any(|&p| p <= 0.0) {
        return Err(Error::InvalidArgument(
            "KKT verification requires a strictly positive policy".into(),
        ));
    }

    let rewards = inst.rewards();
    let ref_probs = inst.ref_probs();
    let stationary_values: Vec<f64> = (0..inst.len())
        .map(|i| {
            let ln_pi = dist.probs[i].ln();
            match *program {
                KktProgram::KlMin { lambda } => ln_pi - ref_probs[i].ln() - lambda * rewards[i],
                KktProgram::EntropyMax { lambda } => ln_pi - lambda * rewards[i],
                KktProgram::EntropyMaxWithKl { lambda1, lambda2 } => {
                    (1.0 + lambda2) * ln_pi - lambda2 * ref_probs[i].ln() - lambda1 * rewards[i]
                }
            }
        })
        .collect();
    let spread = stationary_values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        - stationary_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
    let stationarity = KktCondition {
        passed: spread.abs() <= tol,
        residual: spread,
    };

    let er = expected_reward(dist, inst)?;
    let reward_violation = spec.reward_floor - er; // positive = infeasible
    let kl_violation = match (program, spec.kl_budget) {
        (KktProgram::EntropyMaxWithKl { .. }, Some(k)) => {
            Some(kl_divergence(dist, &inst.ref_policy())? - k)
        }
        _ => None,
    };
    let primal_residual = reward_violation.max(kl_violation.unwrap_or(f64::NEG_INFINITY));
    let primal_feasibility = KktCondition {
        passed: primal_residual <= tol,
        residual: primal_residual,
    };

    let multipliers: Vec<f64> = match *program {
        KktProgram::KlMin { lambda } | KktProgram::EntropyMax { lambda } => vec![lambda],
        KktProgram::EntropyMaxWithKl { lambda1, lambda2 } => vec![lambda1, lambda2],
    };
    let min_multiplier = multipliers.iter().copied().fold(f64::INFINITY, f64::min);
    let dual_feasibility = KktCondition {
        passed: min_multiplier >= 0.0,
        residual: min_multiplier.min(0.0),
    };

    // Each constraint must either bind within tol or carry a multiplier
    // within tol of zero.
    let mut slack_residual: f64 = 0.0;
    let mut slack_ok = true;
    let reward_multiplier = multipliers[0];
    if reward_multiplier > tol && reward_violation.abs() > tol {
        slack_ok = false;
        slack_residual = slack_residual.max(reward_violation.abs());
    }
    if let (Some(kv), KktProgram::EntropyMaxWithKl { lambda2, .. }) = (kl_violation, program) {
        if *lambda2 > tol && kv.abs() > tol {
            slack_ok = false;
            slack_residual = slack_residual.max(kv.abs());
        }
    }
    let complementary_slackness = KktCondition {
        passed: slack_ok,
        residual: slack_residual,
    };

    Ok(KktReport {
        stationarity,
        primal_feasibility,
        dual_feasibility,
        complementary_slackness,
    })
}
