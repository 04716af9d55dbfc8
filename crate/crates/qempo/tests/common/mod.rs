//! Shared generators for the integration suites.

use qempo::instance::{
    AlignmentInstance, CandidateOutcome, LogitPolicy, PolicyDistribution, Quality, ScenarioSuite,
};
use qempo::measures::{log_softmax, softmax_from_logits};
use qempo::online::GroupSample;
use rand::Rng;

/// Random instance: rewards uniform in [0, 1], reference probabilities
/// mixed toward uniform so every entry is at least `0.3 / n` (0.05 for
/// n <= 6), and at least one candidate in each quality class.
pub fn random_instance(rng: &mut impl Rng, id: &str, n: usize) -> AlignmentInstance {
    assert!(n >= 2);
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..5.0)).collect();
    let total: f64 = raw.iter().sum();
    let positives = rng.gen_range(1..n);
    let candidates = (0..n)
        .map(|i| CandidateOutcome {
            label: None,
            reward: rng.gen_range(0.0..1.0),
            quality: if i < positives {
                Quality::Positive
            } else {
                Quality::Negative
            },
            ref_prob: 0.7 * raw[i] / total + 0.3 / n as f64,
        })
        .collect();
    AlignmentInstance::new(id, candidates).unwrap()
}

/// Same shape with the 0/1 quality-indicator reward.
pub fn random_binary_instance(rng: &mut impl Rng, id: &str, n: usize) -> AlignmentInstance {
    let mut inst = random_instance(rng, id, n);
    for c in &mut inst.candidates {
        c.reward = if c.quality == Quality::Positive {
            1.0
        } else {
            0.0
        };
    }
    inst
}

/// Random strictly positive distribution over the instance's candidates.
pub fn random_distribution(rng: &mut impl Rng, inst: &AlignmentInstance) -> PolicyDistribution {
    let logits: Vec<f64> = (0..inst.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    PolicyDistribution::new(inst.id.clone(), softmax_from_logits(&logits).unwrap()).unwrap()
}

/// Random logit policy over a suite.
pub fn random_policy(rng: &mut impl Rng, suite: &ScenarioSuite) -> LogitPolicy {
    let mut policy = LogitPolicy::from_reference(suite);
    for inst in &suite.instances {
        let logits: Vec<f64> = (0..inst.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        policy.logits.insert(inst.id.clone(), logits);
    }
    policy
}

/// Random rollout group: indices drawn from a random policy, 0/1 rewards,
/// log-probabilities consistent with the drawing policy.
pub fn random_group(rng: &mut impl Rng, n: usize, group_size: usize) -> GroupSample {
    let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let probs = softmax_from_logits(&logits).unwrap();
    let log_probs_full = log_softmax(&logits).unwrap();
    let ref_logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let ref_log_probs_full = log_softmax(&ref_logits).unwrap();
    let dist = PolicyDistribution::new("g", probs).unwrap();
    let indices: Vec<usize> = (0..group_size)
        .map(|_| dist.sample_index(rng.gen::<f64>()))
        .collect();
    GroupSample {
        instance_id: "g".into(),
        rewards: indices
            .iter()
            .map(|_| f64::from(rng.gen_range(0..2)))
            .collect(),
        log_probs: indices.iter().map(|&i| log_probs_full[i]).collect(),
        ref_log_probs: indices.iter().map(|&i| ref_log_probs_full[i]).collect(),
        indices,
    }
}
