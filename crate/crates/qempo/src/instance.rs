//! Data model: alignment instances, explicit policies, and tabular logit
//! policies.
//!
//! An [`AlignmentInstance`] is a prompt with a finite enumerated candidate
//! set. Each candidate carries a scalar reward, a quality label (does it
//! satisfy the prompt or not), and its probability under the fixed reference
//! policy. Candidates are atomic: no tokens, no sequences. The candidate
//! index is its position in the list.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{log_softmax, softmax_from_logits};

/// Tolerance for "sums to one" checks on distributions.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Whether a candidate satisfies its prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Positive,
    Negative,
}

/// One candidate output: reward, quality label, and reference probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateOutcome {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub reward: f64,
    pub quality: Quality,
    pub ref_prob: f64,
}

impl CandidateOutcome {
    pub fn is_positive(&self) -> bool {
        self.quality == Quality::Positive
    }
}

/// A prompt with its enumerated candidates.
///
/// Invariants (checked by [`AlignmentInstance::new`]): at least two
/// candidates, finite rewards, `ref_prob >= 0`, and reference probabilities
/// summing to one within [`DISTRIBUTION_TOLERANCE`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentInstance {
    pub id: String,
    pub candidates: Vec<CandidateOutcome>,
}

impl AlignmentInstance {
    pub fn new(id: impl Into<String>, candidates: Vec<CandidateOutcome>) -> Result<Self> {
        let inst = Self {
            id: id.into(),
            candidates,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Checks every construction invariant, reporting the first violation
    /// with the instance id and field path.
    pub fn validate(&self) -> Result<()> {
        if self.candidates.len() < 2 {
            return Err(Error::Validation(format!(
                "instance {:?}: candidates: need at least 2 candidates, got {}",
                self.id,
                self.candidates.len()
            )));
        }
        let mut ref_sum = 0.0;
        for (i, c) in self.candidates.iter().enumerate() {
            if !c.reward.is_finite() {
                return Err(Error::Validation(format!(
                    "instance {:?}: candidates[{i}].reward: must be finite, got {}",
                    self.id, c.reward
                )));
            }
            if !(c.ref_prob >= 0.0) || !c.ref_prob.is_finite() || c.ref_prob > 1.0 {
                return Err(Error::Validation(format!(
                    "instance {:?}: candidates[{i}].ref_prob: must lie in [0, 1], got {}",
                    self.id, c.ref_prob
                )));
            }
            ref_sum += c.ref_prob;
        }
        if (ref_sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(Error::Validation(format!(
                "instance {:?}: candidates[*].ref_prob: must sum to 1 within {DISTRIBUTION_TOLERANCE:e}, got {ref_sum}",
                self.id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.reward).collect()
    }

    pub fn ref_probs(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.ref_prob).collect()
    }

    /// Reference distribution as a policy value.
    pub fn ref_policy(&self) -> PolicyDistribution {
        PolicyDistribution {
            instance_id: self.id.clone(),
            probs: self.ref_probs(),
        }
    }

    pub fn positive_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.candidates[i].is_positive())
            .collect()
    }

    pub fn negative_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| !self.candidates[i].is_positive())
            .collect()
    }

    /// Errors unless both quality classes are populated. Operations built on
    /// the quality split call this first.
    pub fn require_both_classes(&self) -> Result<()> {
        if self.positive_indices().is_empty() || self.negative_indices().is_empty() {
            return Err(Error::InvalidArgument(format!(
                "instance {:?}: needs at least one positive and one negative candidate",
                self.id
            )));
        }
        Ok(())
    }

    pub fn max_reward(&self) -> f64 {
        self.rewards().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// An explicit probability vector over one instance's candidates.
///
/// Construction validates nonnegativity and normalization within
/// [`DISTRIBUTION_TOLERANCE`]; the entries are stored exactly as given,
/// never silently renormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDistribution {
    pub instance_id: String,
    pub probs: Vec<f64>,
}

impl PolicyDistribution {
    pub fn new(instance_id: impl Into<String>, probs: Vec<f64>) -> Result<Self> {
        let instance_id = instance_id.into();
        if probs.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "distribution for {instance_id:?}: empty probability vector"
            )));
        }
        let mut sum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "distribution for {instance_id:?}: probs[{i}] = {p} is not a probability"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "distribution for {instance_id:?}: probabilities sum to {sum}, not 1 within {DISTRIBUTION_TOLERANCE:e}"
            )));
        }
        Ok(Self { instance_id, probs })
    }

    /// Uniform distribution over `n` candidates.
    pub fn uniform(instance_id: impl Into<String>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("uniform over 0 candidates".into()));
        }
        Ok(Self {
            instance_id: instance_id.into(),
            probs: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the first entry drawn by inverse-CDF sampling with uniform
    /// variate `u` in [0, 1).
    pub fn sample_index(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// Trainable per-instance logits; the policy for an instance is the softmax
/// of its logit vector. Adding a constant to all logits of one instance
/// leaves the induced distribution unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitPolicy {
    pub logits: BTreeMap<String, Vec<f64>>,
}

impl LogitPolicy {
    pub fn new() -> Self {
        Self {
            logits: BTreeMap::new(),
        }
    }

    /// Initializes every instance's logits at `ln ref_prob`, so the induced
    /// policy starts exactly at the reference distribution. Candidates with
    /// zero reference probability get `-inf` logits and stay out of the
    /// support.
    pub fn from_reference(suite: &ScenarioSuite) -> Self {
        let mut logits = BTreeMap::new();
        for inst in &suite.instances {
            logits.insert(
                inst.id.clone(),
                inst.ref_probs().iter().map(|&p| p.ln()).collect(),
            );
        }
        Self { logits }
    }

    pub fn logits_for(&self, instance_id: &str) -> Result<&Vec<f64>> {
        self.logits.get(instance_id).ok_or_else(|| {
            Error::InvalidArgument(format!("no logits for instance {instance_id:?}"))
        })
    }

    pub fn logits_mut(&mut self, instance_id: &str) -> Result<&mut Vec<f64>> {
        self.logits.get_mut(instance_id).ok_or_else(|| {
            Error::InvalidArgument(format!("no logits for instance {instance_id:?}"))
        })
    }

    /// Induced distribution for one instance.
    pub fn distribution(&self, instance_id: &str) -> Result<PolicyDistribution> {
        let probs = softmax_from_logits(self.logits_for(instance_id)?)?;
        Ok(PolicyDistribution {
            instance_id: instance_id.to_string(),
            probs,
        })
    }

    /// Log-probabilities for one instance.
    pub fn log_probs(&self, instance_id: &str) -> Result<Vec<f64>> {
        log_softmax(self.logits_for(instance_id)?)
    }
}

impl Default for LogitPolicy {
    fn default() -> Self {
        Self::new()
    }
}

/// A batch of instances plus the seed that governs every stochastic
/// operation run against it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSuite {
    pub seed: u64,
    pub instances: Vec<AlignmentInstance>,
}

impl ScenarioSuite {
    pub fn new(seed: u64, instances: Vec<AlignmentInstance>) -> Result<Self> {
        let suite = Self { seed, instances };
        suite.validate()?;
        Ok(suite)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, inst) in self.instances.iter().enumerate() {
            inst.validate()?;
            if !seen.insert(inst.id.as_str()) {
                return Err(Error::Validation(format!(
                    "instances[{i}].id: duplicate instance id {:?}",
                    inst.id
                )));
            }
        }
        Ok(())
    }

    pub fn instance(&self, id: &str) -> Result<&AlignmentInstance> {
        self.instances
            .iter()
            .find(|inst| inst.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("no instance with id {id:?}")))
    }
}
