//! Online group training: sample a group of candidates from the current
//! policy, center the rewards into advantages, and descend an analytic
//! gradient of the group loss.
//!
//! The QEMPO and QEMPO-KL online losses come from matching centered
//! implied rewards to centered observed rewards over the group. Writing
//! `Cov`/`Var` for group empirical moments (divided by the group size so
//! the matching identity is exact), `b1 = 1/lambda1`, `b2 = lambda2/lambda1`,
//! and `C = b1 + b2`:
//!
//! * QEMPO:    `loss = -2 (1/lambda) Cov(r, ln pi) + gate * (1/lambda)^2 Var(ln pi)`
//! * QEMPO-KL: `loss = -2 C Cov(r, ln pi) - 2 C b2 Cov(ln pi, ln ref)
//!              + gate * C^2 Var(ln pi)`
//!
//! Up to terms independent of the policy, each equals the group
//! mean-squared error between centered implied and centered observed
//! rewards. The variance term (which pushes the policy toward uniformity
//! over the group) is applied only when the quality gate opens; by default
//! that requires a fully correct group, preventing entropy from being
//! pumped into wrong answers.
//!
//! A GRPO-style reward-maximization baseline with a sampled KL penalty is
//! included for comparison, as is a loss variant that couples the
//! covariance to the sampling-time log-probabilities (with a doubled
//! variance coefficient) instead of the reference.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{AlignmentInstance, LogitPolicy, Quality, ScenarioSuite};
use crate::measures::{entropy, expected_reward};
use crate::metrics::{pass_at_k, PassAtKInput};
use crate::seeding::stream_rng;

/// One sampled rollout group for a single instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSample {
    pub instance_id: String,
    /// Candidate indices drawn with replacement from the sampling policy.
    pub indices: Vec<usize>,
    /// Rewards at the sampled indices (0/1 in gating scenarios).
    pub rewards: Vec<f64>,
    /// `ln pi` at the sampled indices under the sampling-time policy.
    pub log_probs: Vec<f64>,
    /// `ln ref` at the sampled indices.
    pub ref_log_probs: Vec<f64>,
}

impl GroupSample {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let g = self.indices.len();
        if g < 2 {
            return Err(Error::InvalidArgument(format!(
                "group for {:?} needs at least 2 samples, got {g}",
                self.instance_id
            )));
        }
        if self.rewards.len() != g || self.log_probs.len() != g || self.ref_log_probs.len() != g {
            return Err(Error::InvalidArgument(format!(
                "group for {:?} has inconsistent vector lengths",
                self.instance_id
            )));
        }
        Ok(())
    }
}

/// When the entropy-encouraging variance term applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceGate {
    /// Only on groups whose rewards are all 1 (fully correct).
    AllCorrect,
    /// On groups containing at least one reward of 1.
    AnyCorrect,
    /// Unconditionally.
    Always,
}

impl VarianceGate {
    /// Whether the gate opens for these group rewards (0/1 scale).
    pub fn open(self, rewards: &[f64]) -> bool {
        match self {
            VarianceGate::AllCorrect => rewards.iter().all(|&r| r == 1.0),
            VarianceGate::AnyCorrect => rewards.contains(&1.0),
            VarianceGate::Always => true,
        }
    }
}

/// Which covariance anchor the KL-coupled online loss uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OnlineLossVariant {
    /// Covariance against the reference log-probabilities (the
    /// moment-matching form above).
    #[default]
    Reference,
    /// Covariance against the sampling-time (old policy)
    /// log-probabilities, sign flipped and with the variance coefficient
    /// doubled.
    OldPolicyCov,
}

/// Which online objective to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OnlineMethod {
    Qempo,
    QempoKl,
    GrpoBaseline,
}

/// Hyperparameters for one online training run. Only the multiplier
/// fields of the selected method are read.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineConfig {
    pub method: OnlineMethod,
    /// Samples per group.
    #[serde(default = "defaults::group_size")]
    pub group_size: usize,
    /// QEMPO `1/lambda`.
    #[serde(default = "defaults::inv_lambda")]
    pub inv_lambda: f64,
    /// QEMPO-KL `1/lambda1`.
    #[serde(default = "defaults::inv_lambda")]
    pub inv_lambda1: f64,
    /// QEMPO-KL `lambda2/lambda1`.
    #[serde(default = "defaults::ratio21")]
    pub ratio21: f64,
    /// GRPO baseline KL-penalty weight.
    #[serde(default = "defaults::beta")]
    pub beta: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    #[serde(default = "defaults::variance_gate")]
    pub variance_gate: VarianceGate,
    #[serde(default)]
    pub loss_variant: OnlineLossVariant,
    /// Normalize advantages by the group standard deviation.
    #[serde(default)]
    pub advantage_std_normalize: bool,
    /// History rows are recorded every this many steps.
    #[serde(default = "defaults::eval_interval")]
    pub eval_interval: usize,
    /// Evaluation draws per instance for pass@k.
    #[serde(default = "defaults::eval_samples")]
    pub eval_samples: usize,
    /// The k values evaluated and written to the history.
    #[serde(default = "defaults::pass_k_values")]
    pub pass_k_values: Vec<usize>,
}

mod defaults {
    use super::VarianceGate;
    pub fn group_size() -> usize {
        10
    }
    pub fn inv_lambda() -> f64 {
        4e-3
    }
    pub fn ratio21() -> f64 {
        1e-2
    }
    pub fn beta() -> f64 {
        1e-2
    }
    pub fn variance_gate() -> VarianceGate {
        VarianceGate::AllCorrect
    }
    pub fn eval_interval() -> usize {
        50
    }
    pub fn eval_samples() -> usize {
        100
    }
    pub fn pass_k_values() -> Vec<usize> {
        vec![1, 4, 16]
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "group_size must be at least 2, got {}",
                self.group_size
            )));
        }
        let positive = [
            ("inv_lambda", self.inv_lambda),
            ("inv_lambda1", self.inv_lambda1),
            ("beta", self.beta),
            ("learning_rate", self.learning_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if !(self.ratio21 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ratio21 must be nonnegative, got {}",
                self.ratio21
            )));
        }
        if self.eval_interval == 0 {
            return Err(Error::InvalidArgument(
                "eval_interval must be at least 1".into(),
            ));
        }
        if self.eval_samples == 0 {
            return Err(Error::InvalidArgument(
                "eval_samples must be at least 1".into(),
            ));
        }
        for &k in &self.pass_k_values {
            if k == 0 || k > self.eval_samples {
                return Err(Error::InvalidArgument(format!(
                    "pass@k target {k} must lie in 1..={}",
                    self.eval_samples
                )));
            }
        }
        Ok(())
    }
}

/// Rewards minus their group mean; optionally divided by the group
/// standard deviation (with a 1e-8 floor).
pub fn grpo_advantages_with(rewards: &[f64], std_normalize: bool) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "advantage estimation needs at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    let mut advantages: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    if std_normalize {
        let var = advantages.iter().map(|a| a * a).sum::<f64>() / advantages.len() as f64;
        let denom = var.sqrt().max(1e-8);
        for a in &mut advantages {
            *a /= denom;
        }
    }
    Ok(advantages)
}

/// Mean-centered group advantages (no standard-deviation normalization).
pub fn grpo_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    grpo_advantages_with(rewards, false)
}

fn group_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `Cov(a, b)` with the 1/G normalization.
fn group_cov(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (group_mean(a), group_mean(b));
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / a.len() as f64
}

/// Group loss for the reference-free policy with current log-probs
/// `current` at the sampled indices (`group.log_probs` when evaluating at
/// sampling time). `gate_open` toggles the variance term.
fn qempo_online_loss_at(
    group: &GroupSample,
    current: &[f64],
    inv_lambda: f64,
    gate_open: bool,
) -> f64 {
    let c = inv_lambda;
    let mut loss = -2.0 * c * group_cov(&group.rewards, current);
    if gate_open {
        loss += c * c * group_cov(current, current);
    }
    loss
}

/// Group loss for the KL-coupled policy with current log-probs `current`.
fn qempo_kl_online_loss_at(
    group: &GroupSample,
    current: &[f64],
    inv_lambda1: f64,
    ratio21: f64,
    gate_open: bool,
    variant: OnlineLossVariant,
) -> f64 {
    let (b1, b2) = (inv_lambda1, ratio21);
    let c = b1 + b2;
    match variant {
        OnlineLossVariant::Reference => {
            let mut loss = -2.0 * c * group_cov(&group.rewards, current)
                - 2.0 * c * b2 * group_cov(current, &group.ref_log_probs);
            if gate_open {
                loss += c * c * group_cov(current, current);
            }
            loss
        }
        OnlineLossVariant::OldPolicyCov => {
            // Sign flipped, coupled to the sampling-time log-probs, and the
            // variance coefficient doubled relative to the reference form.
            let advantages = group
                .rewards
                .iter()
                .map(|r| r - group_mean(&group.rewards))
                .collect::<Vec<_>>();
            let adv_term = -group_cov_uncentered(&advantages, current);
            let cov = b2 * group_cov(current, &group.log_probs);
            let var = if gate_open {
                group_cov(current, current)
            } else {
                0.0
            };
            2.0 * c * (adv_term + b2 * cov + c * var)
        }
    }
}

/// `E[a * b]` without centering `b`; the advantage weights are already
/// centered so this matches the covariance up to an exact identity.
fn group_cov_uncentered(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum::<f64>() / a.len() as f64
}

/// GRPO-style baseline: centered policy-gradient surrogate plus a sampled
/// KL penalty, `-E[adv * ln pi] + beta E[ln pi - ln ref]` with
/// `adv = r - mean r`, optionally standard-deviation normalized.
fn rlhf_grpo_baseline_loss_at(
    group: &GroupSample,
    current: &[f64],
    beta: f64,
    std_normalize: bool,
) -> f64 {
    let advantages = grpo_advantages_with(&group.rewards, std_normalize).expect("validated group");
    let pg = -group_cov_uncentered(&advantages, current);
    let kl_penalty = group_mean(current) - group_mean(&group.ref_log_probs);
    pg + beta * kl_penalty
}

/// Reference-free online loss evaluated at the group's sampling-time
/// log-probabilities.
pub fn qempo_online_loss(group: &GroupSample, inv_lambda: f64, gate: VarianceGate) -> Result<f64> {
    group.validate()?;
    if !(inv_lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "inv_lambda must be strictly positive, got {inv_lambda}"
        )));
    }
    Ok(qempo_online_loss_at(
        group,
        &group.log_probs,
        inv_lambda,
        gate.open(&group.rewards),
    ))
}

/// KL-coupled online loss evaluated at the group's sampling-time
/// log-probabilities. At `ratio21 = 0` this equals [`qempo_online_loss`]
/// with `inv_lambda = inv_lambda1`.
pub fn qempo_kl_online_loss(
    group: &GroupSample,
    inv_lambda1: f64,
    ratio21: f64,
    gate: VarianceGate,
) -> Result<f64> {
    qempo_kl_online_loss_variant(
        group,
        inv_lambda1,
        ratio21,
        gate,
        OnlineLossVariant::Reference,
    )
}

/// Same loss with an explicit variant selector.
pub fn qempo_kl_online_loss_variant(
    group: &GroupSample,
    inv_lambda1: f64,
    ratio21: f64,
    gate: VarianceGate,
    variant: OnlineLossVariant,
) -> Result<f64> {
    group.validate()?;
    if !(inv_lambda1 > 0.0) || !(ratio21 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need inv_lambda1 > 0 and ratio21 >= 0, got {inv_lambda1}, {ratio21}"
        )));
    }
    Ok(qempo_kl_online_loss_at(
        group,
        &group.log_probs,
        inv_lambda1,
        ratio21,
        gate.open(&group.rewards),
        variant,
    ))
}

/// Baseline loss evaluated at the group's sampling-time log-probabilities.
pub fn rlhf_grpo_baseline_loss(group: &GroupSample, beta: f64) -> Result<f64> {
    group.validate()?;
    if !(beta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "beta must be nonnegative, got {beta}"
        )));
    }
    Ok(rlhf_grpo_baseline_loss_at(
        group,
        &group.log_probs,
        beta,
        false,
    ))
}

/// The policy-independent remainder that turns each online loss into the
/// exact centered-implied-reward mean-squared error (gate open):
/// `Var(r)` for QEMPO, `Var(r) + b2^2 Var(ln ref) + 2 b2 Cov(ln ref, r)`
/// for QEMPO-KL.
pub fn mse_identity_offset(group: &GroupSample, inv_lambda1: f64, ratio21: f64) -> f64 {
    let _ = inv_lambda1;
    let b2 = ratio21;
    group_cov(&group.rewards, &group.rewards)
        + b2 * b2 * group_cov(&group.ref_log_probs, &group.ref_log_probs)
        + 2.0 * b2 * group_cov(&group.ref_log_probs, &group.rewards)
}

/// The explicit group MSE between centered implied rewards and centered
/// observed rewards; the quantity each online loss reproduces up to
/// [`mse_identity_offset`].
pub fn centered_implied_reward_mse(
    group: &GroupSample,
    current: &[f64],
    inv_lambda1: f64,
    ratio21: f64,
) -> f64 {
    let (b1, b2) = (inv_lambda1, ratio21);
    let c = b1 + b2;
    let m_pi = group_mean(current);
    let m_ref = group_mean(&group.ref_log_probs);
    let m_r = group_mean(&group.rewards);
    let mut total = 0.0;
    for ((&lp, &ref_lp), &r) in current.iter().zip(&group.ref_log_probs).zip(&group.rewards) {
        let implied = c * (lp - m_pi) - b2 * (ref_lp - m_ref);
        let diff = implied - (r - m_r);
        total += diff * diff;
    }
    total / group.len() as f64
}

/// Analytic gradient of the configured group loss with respect to the
/// instance's logits. `current_full` is the full log-probability vector of
/// the policy being differentiated and `probs` its probabilities; the
/// group supplies the sampled indices, rewards, and the fixed
/// reference/sampling-time log-probabilities.
pub fn group_loss_gradient(
    group: &GroupSample,
    config: &OnlineConfig,
    current_full: &[f64],
    probs: &[f64],
) -> Vec<f64> {
    let g = group.len() as f64;
    let current: Vec<f64> = group.indices.iter().map(|&i| current_full[i]).collect();
    let gate_open = config.variance_gate.open(&group.rewards);

    // dLoss / d(current log-prob of sample k)
    let r_mean = group_mean(&group.rewards);
    let l_mean = group_mean(&current);
    let dloss: Vec<f64> = match config.method {
        OnlineMethod::Qempo => {
            let c = config.inv_lambda;
            (0..group.len())
                .map(|k| {
                    let mut d = -2.0 * c * (group.rewards[k] - r_mean) / g;
                    if gate_open {
                        d += 2.0 * c * c * (current[k] - l_mean) / g;
                    }
                    d
                })
                .collect()
        }
        OnlineMethod::QempoKl => {
            let (b1, b2) = (config.inv_lambda1, config.ratio21);
            let c = b1 + b2;
            match config.loss_variant {
                OnlineLossVariant::Reference => {
                    let ref_mean = group_mean(&group.ref_log_probs);
                    (0..group.len())
                        .map(|k| {
                            let mut d = -2.0 * c * (group.rewards[k] - r_mean) / g
                                - 2.0 * c * b2 * (group.ref_log_probs[k] - ref_mean) / g;
                            if gate_open {
                                d += 2.0 * c * c * (current[k] - l_mean) / g;
                            }
                            d
                        })
                        .collect()
                }
                OnlineLossVariant::OldPolicyCov => {
                    let old_mean = group_mean(&group.log_probs);
                    (0..group.len())
                        .map(|k| {
                            let mut d = -2.0 * c * (group.rewards[k] - r_mean) / g
                                + 2.0 * c * b2 * b2 * (group.log_probs[k] - old_mean) / g;
                            if gate_open {
                                d += 4.0 * c * c * (current[k] - l_mean) / g;
                            }
                            d
                        })
                        .collect()
                }
            }
        }
        OnlineMethod::GrpoBaseline => {
            let advantages = grpo_advantages_with(&group.rewards, config.advantage_std_normalize)
                .expect("validated group");
            (0..group.len())
                .map(|k| (-advantages[k] + config.beta) / g)
                .collect()
        }
    };

    // Chain through log-softmax: d ln pi_k / d theta_j = delta - pi_j.
    let mut grad = vec![0.0; current_full.len()];
    let total: f64 = dloss.iter().sum();
    for (k, &idx) in group.indices.iter().enumerate() {
        grad[idx] += dloss[k];
    }
    for (j, g_j) in grad.iter_mut().enumerate() {
        *g_j -= probs[j] * total;
    }
    grad
}

/// Samples a group of `group_size` candidates (with replacement) from the
/// policy's current distribution for `inst`.
pub fn sample_group(
    inst: &AlignmentInstance,
    policy: &LogitPolicy,
    group_size: usize,
    rng: &mut impl Rng,
) -> Result<GroupSample> {
    if group_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "group_size must be at least 2, got {group_size}"
        )));
    }
    let dist = policy.distribution(&inst.id)?;
    let log_probs_full = policy.log_probs(&inst.id)?;
    let rewards = inst.rewards();
    let ref_probs = inst.ref_probs();
    let mut indices = Vec::with_capacity(group_size);
    for _ in 0..group_size {
        indices.push(dist.sample_index(rng.gen::<f64>()));
    }
    Ok(GroupSample {
        instance_id: inst.id.clone(),
        rewards: indices.iter().map(|&i| rewards[i]).collect(),
        log_probs: indices.iter().map(|&i| log_probs_full[i]).collect(),
        ref_log_probs: indices
            .iter()
            .map(|&i| {
                if ref_probs[i] > 0.0 {
                    ref_probs[i].ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect(),
        indices,
    })
}

/// One recorded evaluation during online training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineHistoryRow {
    pub step: usize,
    pub method: OnlineMethod,
    pub loss: f64,
    pub entropy_mean: f64,
    pub expected_reward_mean: f64,
    /// Mean pass@k across instances, aligned with the configured k values.
    pub pass_at_k: Vec<f64>,
}

/// Result of an online run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineOutcome {
    pub policy: LogitPolicy,
    pub history: Vec<OnlineHistoryRow>,
}

/// Mean pass@k across instances: draws `eval_samples` candidates per
/// instance from the policy on a dedicated evaluation stream and counts
/// positive-quality draws as correct.
pub fn evaluate_pass_at_k(
    suite: &ScenarioSuite,
    policy: &LogitPolicy,
    k_values: &[usize],
    eval_samples: usize,
    seed: u64,
    step: usize,
) -> Result<Vec<f64>> {
    let mut totals = vec![0.0; k_values.len()];
    for inst in &suite.instances {
        let mut rng = stream_rng(seed, &format!("pass-at-k/{}/{step}", inst.id));
        let dist = policy.distribution(&inst.id)?;
        let mut correct = 0usize;
        for _ in 0..eval_samples {
            let idx = dist.sample_index(rng.gen::<f64>());
            if inst.candidates[idx].quality == Quality::Positive {
                correct += 1;
            }
        }
        for (slot, &k) in totals.iter_mut().zip(k_values) {
            *slot += pass_at_k(PassAtKInput {
                samples: eval_samples,
                correct,
                k,
            })?;
        }
    }
    let n = suite.instances.len() as f64;
    Ok(totals.into_iter().map(|t| t / n).collect())
}

/// Runs the configured online method: every step samples one group per
/// instance from the current policy, averages the analytic group-loss
/// gradients in suite order, and takes one fixed-rate descent step.
/// Deterministic given the config seed.
pub fn train_online(suite: &ScenarioSuite, config: &OnlineConfig) -> Result<OnlineOutcome> {
    config.validate()?;
    suite.validate()?;
    if suite.instances.is_empty() {
        return Err(Error::InvalidArgument("empty scenario suite".into()));
    }

    let mut policy = LogitPolicy::from_reference(suite);
    let mut history = Vec::new();
    let mut rng = stream_rng(config.seed, "online-rollouts");

    let record = |step: usize,
                  loss: f64,
                  policy: &LogitPolicy,
                  history: &mut Vec<OnlineHistoryRow>|
     -> Result<()> {
        let mut h = 0.0;
        let mut er = 0.0;
        for inst in &suite.instances {
            let dist = policy.distribution(&inst.id)?;
            h += entropy(&dist);
            er += expected_reward(&dist, inst)?;
        }
        let n = suite.instances.len() as f64;
        let pass = evaluate_pass_at_k(
            suite,
            policy,
            &config.pass_k_values,
            config.eval_samples,
            config.seed,
            step,
        )?;
        history.push(OnlineHistoryRow {
            step,
            method: config.method,
            loss,
            entropy_mean: h / n,
            expected_reward_mean: er / n,
            pass_at_k: pass,
        });
        Ok(())
    };

    // Step-0 loss comes from groups on a dedicated stream so the training
    // stream starts from the same state regardless of evaluation.
    let initial_loss = {
        let mut eval_rng = stream_rng(config.seed, "online-initial-loss");
        let mut total = 0.0;
        for inst in &suite.instances {
            let group = sample_group(inst, &policy, config.group_size, &mut eval_rng)?;
            let gate_open = config.variance_gate.open(&group.rewards);
            total += match config.method {
                OnlineMethod::Qempo => {
                    qempo_online_loss_at(&group, &group.log_probs, config.inv_lambda, gate_open)
                }
                OnlineMethod::QempoKl => qempo_kl_online_loss_at(
                    &group,
                    &group.log_probs,
                    config.inv_lambda1,
                    config.ratio21,
                    gate_open,
                    config.loss_variant,
                ),
                OnlineMethod::GrpoBaseline => rlhf_grpo_baseline_loss_at(
                    &group,
                    &group.log_probs,
                    config.beta,
                    config.advantage_std_normalize,
                ),
            };
        }
        total / suite.instances.len() as f64
    };
    record(0, initial_loss, &policy, &mut history)?;

    for step in 1..=config.steps {
        let mut step_loss = 0.0;
        // Per-instance gradients accumulate in suite order; the update is
        // one serialized transaction after all groups are evaluated.
        let mut updates: Vec<(String, Vec<f64>)> = Vec::with_capacity(suite.instances.len());
        for inst in &suite.instances {
            let group = sample_group(inst, &policy, config.group_size, &mut rng)?;
            let current_full = policy.log_probs(&inst.id)?;
            let probs = policy.distribution(&inst.id)?.probs;
            let gate_open = config.variance_gate.open(&group.rewards);
            let loss = match config.method {
                OnlineMethod::Qempo => {
                    qempo_online_loss_at(&group, &group.log_probs, config.inv_lambda, gate_open)
                }
                OnlineMethod::QempoKl => qempo_kl_online_loss_at(
                    &group,
                    &group.log_probs,
                    config.inv_lambda1,
                    config.ratio21,
                    gate_open,
                    config.loss_variant,
                ),
                OnlineMethod::GrpoBaseline => rlhf_grpo_baseline_loss_at(
                    &group,
                    &group.log_probs,
                    config.beta,
                    config.advantage_std_normalize,
                ),
            };
            if !loss.is_finite() {
                return Err(Error::TrainingFailure {
                    step,
                    message: format!("group loss for {:?} became {loss}", inst.id),
                });
            }
            step_loss += loss;
            let grad = group_loss_gradient(&group, config, &current_full, &probs);
            updates.push((inst.id.clone(), grad));
        }
        step_loss /= suite.instances.len() as f64;

        for (id, grad) in updates {
            let logits = policy.logits_mut(&id)?;
            for (theta, g) in logits.iter_mut().zip(&grad) {
                *theta -= config.learning_rate * g;
                if !theta.is_finite() {
                    return Err(Error::TrainingFailure {
                        step,
                        message: "logit became non-finite".into(),
                    });
                }
            }
        }

        if step % config.eval_interval == 0 || step == config.steps {
            record(step, step_loss, &policy, &mut history)?;
        }
    }

    Ok(OnlineOutcome { policy, history })
}
