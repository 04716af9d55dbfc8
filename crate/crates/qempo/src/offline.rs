//! Offline preference training: Bradley-Terry pair generation and tabular
//! gradient descent on the DPO, QEMPO, and QEMPO-KL pairwise losses.
//!
//! Every loss is a mean of `-ln sigmoid(margin)` terms over preference
//! pairs; the three methods differ only in the margin:
//!
//! * DPO:      `beta * (d ln pi - d ln ref)`
//! * QEMPO:    `(1/lambda) * d ln pi` (reference-free)
//! * QEMPO-KL: `(1/l1) d ln pi + (l2/l1) (d ln pi - d ln ref)`
//!
//! with `d` the winner-minus-loser difference. Margins depend on logits
//! only through log-probability differences, so all three losses are
//! invariant to per-instance logit shifts and their gradients sum to zero
//! per instance.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{AlignmentInstance, LogitPolicy, ScenarioSuite};
use crate::measures::{entropy, quality_mass};
use crate::seeding::stream_rng;

/// One ordered preference: the winner beat the loser.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub instance_id: String,
    pub winner: usize,
    pub loser: usize,
}

/// Which pairwise loss to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OfflineMethod {
    Dpo,
    Qempo,
    QempoKl,
}

/// Hyperparameters for one offline training run. Only the multiplier
/// fields of the selected method are read.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfflineConfig {
    pub method: OfflineMethod,
    /// DPO inverse temperature.
    #[serde(default = "defaults::beta")]
    pub beta: f64,
    /// QEMPO `1/lambda`.
    #[serde(default = "defaults::inv_lambda")]
    pub inv_lambda: f64,
    /// QEMPO-KL `1/lambda1`.
    #[serde(default = "defaults::inv_lambda")]
    pub inv_lambda1: f64,
    /// QEMPO-KL `lambda2/lambda1`.
    #[serde(default = "defaults::ratio21")]
    pub ratio21: f64,
    pub learning_rate: f64,
    pub steps: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    pub seed: u64,
    /// Preference pairs sampled per instance before the holdout split.
    #[serde(default = "defaults::pairs_per_instance")]
    pub pairs_per_instance: usize,
    /// Fraction of pairs held out for best-model selection.
    #[serde(default = "defaults::holdout_fraction")]
    pub holdout_fraction: f64,
    /// History rows are recorded every this many steps.
    #[serde(default = "defaults::eval_interval")]
    pub eval_interval: usize,
}

mod defaults {
    pub fn beta() -> f64 {
        1e-2
    }
    pub fn inv_lambda() -> f64 {
        4e-3
    }
    pub fn ratio21() -> f64 {
        1e-2
    }
    pub fn batch_size() -> usize {
        128
    }
    pub fn pairs_per_instance() -> usize {
        512
    }
    pub fn holdout_fraction() -> f64 {
        0.2
    }
    pub fn eval_interval() -> usize {
        50
    }
}

impl OfflineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta", self.beta),
            ("inv_lambda", self.inv_lambda),
            ("inv_lambda1", self.inv_lambda1),
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
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "batch_size must be at least 1".into(),
            ));
        }
        if self.pairs_per_instance == 0 {
            return Err(Error::InvalidArgument(
                "pairs_per_instance must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::InvalidArgument(format!(
                "holdout_fraction must lie in [0, 1), got {}",
                self.holdout_fraction
            )));
        }
        if self.eval_interval == 0 {
            return Err(Error::InvalidArgument(
                "eval_interval must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Draws `count` preferences: an unordered candidate pair uniformly at
/// random, ordered by the Bradley-Terry rule
/// `P(i beats j) = sigmoid(r_i - r_j)`.
pub fn sample_preferences(
    inst: &AlignmentInstance,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<PreferencePair>> {
    if count == 0 {
        return Err(Error::InvalidArgument(
            "preference count must be at least 1".into(),
        ));
    }
    let n = inst.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "instance {:?} has fewer than 2 candidates",
            inst.id
        )));
    }
    let rewards = inst.rewards();
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let p_a_wins = sigmoid(rewards[a] - rewards[b]);
        let (winner, loser) = if rng.gen::<f64>() < p_a_wins {
            (a, b)
        } else {
            (b, a)
        };
        pairs.push(PreferencePair {
            instance_id: inst.id.clone(),
            winner,
            loser,
        });
    }
    Ok(pairs)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln sigmoid(x)`, stable for large negative margins.
fn neg_log_sigmoid(x: f64) -> f64 {
    (-x).max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Per-pair margin pieces shared by losses and gradients: the margin `u`
/// and the coefficient `c` multiplying `(d ln pi)` inside it, so
/// `du/dtheta = c * (e_w - e_l)`.
struct MarginTerms {
    u: f64,
    c: f64,
}

struct LossContext<'a> {
    policy: &'a LogitPolicy,
    suite: Option<&'a ScenarioSuite>,
    log_probs: BTreeMap<String, Vec<f64>>,
}

impl<'a> LossContext<'a> {
    fn new(policy: &'a LogitPolicy, suite: Option<&'a ScenarioSuite>) -> Self {
        Self {
            policy,
            suite,
            log_probs: BTreeMap::new(),
        }
    }

    fn log_probs(&mut self, id: &str) -> Result<&Vec<f64>> {
        if !self.log_probs.contains_key(id) {
            let lp = self.policy.log_probs(id)?;
            self.log_probs.insert(id.to_string(), lp);
        }
        Ok(&self.log_probs[id])
    }

    fn ln_ref(&self, id: &str, index: usize) -> Result<f64> {
        let suite = self.suite.ok_or_else(|| {
            Error::InvalidArgument(
                "this loss needs the scenario suite for reference probabilities".into(),
            )
        })?;
        let p = suite.instance(id)?.candidates[index].ref_prob;
        if p <= 0.0 {
            return Err(Error::SupportMismatch(format!(
                "instance {id:?}: candidate {index} has zero reference probability"
            )));
        }
        Ok(p.ln())
    }

    fn margin(
        &mut self,
        pair: &PreferencePair,
        method: OfflineMethod,
        cfg: &OfflineConfig,
    ) -> Result<MarginTerms> {
        let lp = self.log_probs(&pair.instance_id)?;
        let n = lp.len();
        if pair.winner >= n || pair.loser >= n || pair.winner == pair.loser {
            return Err(Error::InvalidArgument(format!(
                "pair ({}, {}) out of range or degenerate for instance {:?}",
                pair.winner, pair.loser, pair.instance_id
            )));
        }
        let (lw, ll) = (lp[pair.winner], lp[pair.loser]);
        if lw == f64::NEG_INFINITY || ll == f64::NEG_INFINITY {
            return Err(Error::SupportMismatch(format!(
                "instance {:?}: pair member outside the policy support",
                pair.instance_id
            )));
        }
        let d_ln_pi = lw - ll;
        match method {
            OfflineMethod::Dpo => {
                let d_ln_ref = self.ln_ref(&pair.instance_id, pair.winner)?
                    - self.ln_ref(&pair.instance_id, pair.loser)?;
                Ok(MarginTerms {
                    u: cfg.beta * (d_ln_pi - d_ln_ref),
                    c: cfg.beta,
                })
            }
            OfflineMethod::Qempo => Ok(MarginTerms {
                u: cfg.inv_lambda * d_ln_pi,
                c: cfg.inv_lambda,
            }),
            OfflineMethod::QempoKl => {
                let d_ln_ref = self.ln_ref(&pair.instance_id, pair.winner)?
                    - self.ln_ref(&pair.instance_id, pair.loser)?;
                let c = cfg.inv_lambda1 + cfg.ratio21;
                Ok(MarginTerms {
                    u: c * d_ln_pi - cfg.ratio21 * d_ln_ref,
                    c,
                })
            }
        }
    }
}

fn mean_loss(
    policy: &LogitPolicy,
    suite: Option<&ScenarioSuite>,
    pairs: &[PreferencePair],
    method: OfflineMethod,
    cfg: &OfflineConfig,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty preference-pair list".into()));
    }
    let mut ctx = LossContext::new(policy, suite);
    let mut total = 0.0;
    for pair in pairs {
        total += neg_log_sigmoid(ctx.margin(pair, method, cfg)?.u);
    }
    Ok(total / pairs.len() as f64)
}

/// Mean DPO loss `-ln sigmoid(beta [d ln(pi/ref)])` over the pairs.
pub fn dpo_loss(
    policy: &LogitPolicy,
    suite: &ScenarioSuite,
    pairs: &[PreferencePair],
    beta: f64,
) -> Result<f64> {
    let cfg = OfflineConfig {
        beta,
        ..stub_config(OfflineMethod::Dpo)
    };
    cfg.validate()?;
    mean_loss(policy, Some(suite), pairs, OfflineMethod::Dpo, &cfg)
}

/// Mean reference-free loss `-ln sigmoid((1/lambda) d ln pi)`.
pub fn qempo_offline_loss(
    policy: &LogitPolicy,
    pairs: &[PreferencePair],
    inv_lambda: f64,
) -> Result<f64> {
    let cfg = OfflineConfig {
        inv_lambda,
        ..stub_config(OfflineMethod::Qempo)
    };
    cfg.validate()?;
    mean_loss(policy, None, pairs, OfflineMethod::Qempo, &cfg)
}

/// Mean loss `-ln sigmoid((1/l1) d ln pi + (l2/l1) d ln(pi/ref))`. At
/// `ratio21 = 0` this is exactly [`qempo_offline_loss`].
pub fn qempo_kl_offline_loss(
    policy: &LogitPolicy,
    suite: &ScenarioSuite,
    pairs: &[PreferencePair],
    inv_lambda1: f64,
    ratio21: f64,
) -> Result<f64> {
    let cfg = OfflineConfig {
        inv_lambda1,
        ratio21,
        ..stub_config(OfflineMethod::QempoKl)
    };
    cfg.validate()?;
    mean_loss(policy, Some(suite), pairs, OfflineMethod::QempoKl, &cfg)
}

fn stub_config(method: OfflineMethod) -> OfflineConfig {
    OfflineConfig {
        method,
        beta: defaults::beta(),
        inv_lambda: defaults::inv_lambda(),
        inv_lambda1: defaults::inv_lambda(),
        ratio21: defaults::ratio21(),
        learning_rate: 1.0,
        steps: 0,
        batch_size: defaults::batch_size(),
        seed: 0,
        pairs_per_instance: defaults::pairs_per_instance(),
        holdout_fraction: defaults::holdout_fraction(),
        eval_interval: defaults::eval_interval(),
    }
}

/// Per-instance logit gradients; instances untouched by any pair carry
/// explicit zeros.
pub type LogitGradient = BTreeMap<String, Vec<f64>>;

/// Exact analytic gradient of the configured method's mean loss over
/// `pairs` with respect to every logit. The margin depends on logits only
/// through `ln pi(w) - ln pi(l)`, whose logit Jacobian is the two-hot
/// `e_w - e_l`; consequently each instance's gradient entries sum to zero.
pub fn offline_gradient(
    config: &OfflineConfig,
    policy: &LogitPolicy,
    suite: &ScenarioSuite,
    pairs: &[PreferencePair],
) -> Result<LogitGradient> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty preference-pair list".into()));
    }
    let mut grad: LogitGradient = policy
        .logits
        .iter()
        .map(|(id, logits)| (id.clone(), vec![0.0; logits.len()]))
        .collect();
    let mut ctx = LossContext::new(policy, Some(suite));
    let scale = 1.0 / pairs.len() as f64;
    for pair in pairs {
        let MarginTerms { u, c } = ctx.margin(pair, config.method, config)?;
        // d/du of -ln sigmoid(u) is sigmoid(u) - 1
        let weight = (sigmoid(u) - 1.0) * c * scale;
        let entry = grad.get_mut(&pair.instance_id).ok_or_else(|| {
            Error::InvalidArgument(format!("no logits for instance {:?}", pair.instance_id))
        })?;
        entry[pair.winner] += weight;
        entry[pair.loser] -= weight;
    }
    Ok(grad)
}

/// One recorded evaluation during offline training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfflineHistoryRow {
    pub step: usize,
    pub loss: f64,
    pub entropy_mean: f64,
    pub quality_mass_mean: f64,
    pub holdout_loss: f64,
}

/// Result of an offline run: the selected policy (lowest held-out loss),
/// its selection step, and the recorded history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfflineOutcome {
    pub policy: LogitPolicy,
    pub best_step: usize,
    pub best_holdout_loss: f64,
    pub history: Vec<OfflineHistoryRow>,
}

fn policy_summary(policy: &LogitPolicy, suite: &ScenarioSuite) -> Result<(f64, f64)> {
    let mut h = 0.0;
    let mut q = 0.0;
    for inst in &suite.instances {
        let dist = policy.distribution(&inst.id)?;
        h += entropy(&dist);
        q += quality_mass(&dist, inst)?;
    }
    let n = suite.instances.len() as f64;
    Ok((h / n, q / n))
}

/// Trains logits (initialized at the reference) by plain gradient descent
/// with a fixed step on the configured pairwise loss. Preference pairs are
/// sampled once from the Bradley-Terry model, split into a training set
/// and a holdout used only to select the best snapshot; batches cycle
/// through the training pairs in order. Deterministic given the config
/// seed.
pub fn train_offline(suite: &ScenarioSuite, config: &OfflineConfig) -> Result<OfflineOutcome> {
    config.validate()?;
    suite.validate()?;
    if suite.instances.is_empty() {
        return Err(Error::InvalidArgument("empty scenario suite".into()));
    }

    let mut rng = stream_rng(config.seed, "offline-pairs");
    let mut train_pairs = Vec::new();
    let mut holdout_pairs = Vec::new();
    for inst in &suite.instances {
        let pairs = sample_preferences(inst, config.pairs_per_instance, &mut rng)?;
        let holdout_count =
            (config.holdout_fraction * config.pairs_per_instance as f64).floor() as usize;
        for (i, pair) in pairs.into_iter().enumerate() {
            if i < holdout_count {
                holdout_pairs.push(pair);
            } else {
                train_pairs.push(pair);
            }
        }
    }
    if train_pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "holdout fraction left no training pairs".into(),
        ));
    }

    let mut policy = LogitPolicy::from_reference(suite);
    let mut best_policy = policy.clone();
    let mut best_step = 0;
    let mut best_holdout = f64::INFINITY;
    let mut history = Vec::new();

    let holdout_loss = |policy: &LogitPolicy| -> Result<f64> {
        if holdout_pairs.is_empty() {
            mean_loss(policy, Some(suite), &train_pairs, config.method, config)
        } else {
            mean_loss(policy, Some(suite), &holdout_pairs, config.method, config)
        }
    };

    let record = |step: usize,
                  policy: &LogitPolicy,
                  history: &mut Vec<OfflineHistoryRow>,
                  best: &mut (LogitPolicy, usize, f64)|
     -> Result<()> {
        let loss = mean_loss(policy, Some(suite), &train_pairs, config.method, config)?;
        if !loss.is_finite() {
            return Err(Error::TrainingFailure {
                step,
                message: format!("training loss became {loss}"),
            });
        }
        let (entropy_mean, quality_mass_mean) = policy_summary(policy, suite)?;
        let holdout = holdout_loss(policy)?;
        if holdout < best.2 {
            best.0 = policy.clone();
            best.1 = step;
            best.2 = holdout;
        }
        history.push(OfflineHistoryRow {
            step,
            loss,
            entropy_mean,
            quality_mass_mean,
            holdout_loss: holdout,
        });
        Ok(())
    };

    let mut best = (best_policy, best_step, best_holdout);
    record(0, &policy, &mut history, &mut best)?;

    let mut cursor = 0usize;
    for step in 1..=config.steps {
        let batch: Vec<PreferencePair> = (0..config.batch_size.min(train_pairs.len()))
            .map(|k| train_pairs[(cursor + k) % train_pairs.len()].clone())
            .collect();
        cursor = (cursor + batch.len()) % train_pairs.len();

        let grad = offline_gradient(config, &policy, suite, &batch)?;
        for (id, g) in &grad {
            let logits = policy.logits_mut(id)?;
            for (theta, dg) in logits.iter_mut().zip(g) {
                *theta -= config.learning_rate * dg;
                if !theta.is_finite() {
                    return Err(Error::TrainingFailure {
                        step,
                        message: "logit became non-finite".into(),
                    });
                }
            }
        }

        if step % config.eval_interval == 0 || step == config.steps {
            record(step, &policy, &mut history, &mut best)?;
        }
    }

    (best_policy, best_step, best_holdout) = best;
    // steps = 0 keeps the reference initialization
    let selected = if config.steps == 0 {
        policy
    } else {
        best_policy
    };
    Ok(OfflineOutcome {
        policy: selected,
        best_step,
        best_holdout_loss: best_holdout,
        history,
    })
}
