//! File formats: scenario suites, trained policies, and run manifests.
//!
//! Everything is JSON, pretty-printed with a trailing newline by a single
//! writer so result files round-trip byte-identically: load, re-serialize,
//! compare equal. Scenario validation reports the first violation with the
//! instance id and field path.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{AlignmentInstance, CandidateOutcome, LogitPolicy, Quality, ScenarioSuite};

/// Serializes any report value in the canonical on-disk form.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse(format!("serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Writes a value in the canonical form, creating parent directories.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, to_canonical_json(value)?)?;
    Ok(())
}

/// Reads and deserializes a canonical JSON file.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// On-disk shape of one candidate. The index is positional.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    reward: f64,
    quality: Quality,
    ref_prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    id: String,
    candidates: Vec<CandidateFile>,
}

/// On-disk shape of a scenario suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    seed: u64,
    instances: Vec<InstanceFile>,
}

impl ScenarioFile {
    fn into_suite(self) -> Result<ScenarioSuite> {
        let instances = self
            .instances
            .into_iter()
            .map(|inst| {
                let candidates = inst
                    .candidates
                    .into_iter()
                    .map(|c| CandidateOutcome {
                        label: c.label,
                        reward: c.reward,
                        quality: c.quality,
                        ref_prob: c.ref_prob,
                    })
                    .collect();
                AlignmentInstance::new(inst.id, candidates)
            })
            .collect::<Result<Vec<_>>>()?;
        ScenarioSuite::new(self.seed, instances)
    }

    fn from_suite(suite: &ScenarioSuite) -> Self {
        Self {
            seed: suite.seed,
            instances: suite
                .instances
                .iter()
                .map(|inst| InstanceFile {
                    id: inst.id.clone(),
                    candidates: inst
                        .candidates
                        .iter()
                        .map(|c| CandidateFile {
                            label: c.label.clone(),
                            reward: c.reward,
                            quality: c.quality,
                            ref_prob: c.ref_prob,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Parses scenario text, validating every invariant.
pub fn parse_scenario(text: &str) -> Result<ScenarioSuite> {
    let file: ScenarioFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
    file.into_suite()
}

/// Loads a scenario file from disk.
pub fn load_scenario(path: &Path) -> Result<ScenarioSuite> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Canonical text of a scenario suite.
pub fn scenario_to_json(suite: &ScenarioSuite) -> Result<String> {
    to_canonical_json(&ScenarioFile::from_suite(suite))
}

/// Writes a scenario suite to disk in canonical form.
pub fn save_scenario(path: &Path, suite: &ScenarioSuite) -> Result<()> {
    write_json(path, &ScenarioFile::from_suite(suite))
}

/// On-disk shape of a trained policy: per-instance logits plus provenance
/// metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    /// Name of the command that produced the policy.
    pub produced_by: String,
    pub seed: u64,
    pub logits: LogitPolicy,
}

/// Loads a policy file.
pub fn load_policy(path: &Path) -> Result<PolicyFile> {
    read_json(path)
}

/// Writes a policy file in canonical form.
pub fn save_policy(path: &Path, policy: &PolicyFile) -> Result<()> {
    write_json(path, policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
  "seed": 7,
  "instances": [
    {
      "id": "demo",
      "candidates": [
        { "label": "good", "reward": 1.0, "quality": "positive", "ref_prob": 0.6 },
        { "reward": 0.0, "quality": "negative", "ref_prob": 0.4 }
      ]
    }
  ]
}"#;

    #[test]
    fn parses_and_validates() {
        let suite = parse_scenario(SAMPLE).unwrap();
        assert_eq!(suite.seed, 7);
        assert_eq!(suite.instances.len(), 1);
        assert_eq!(
            suite.instances[0].candidates[0].label.as_deref(),
            Some("good")
        );
    }

    #[test]
    fn reports_field_path_on_violation() {
        let bad = SAMPLE.replace("0.4", "0.5");
        let err = parse_scenario(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("\"demo\""), "{msg}");
        assert!(msg.contains("ref_prob"), "{msg}");
    }

    #[test]
    fn rejects_unknown_fields() {
        let bad = SAMPLE.replace("\"reward\": 0.0", "\"rewardz\": 0.0");
        assert!(parse_scenario(&bad).is_err());
    }

    #[test]
    fn round_trips_byte_identically() {
        let suite = parse_scenario(SAMPLE).unwrap();
        let text = scenario_to_json(&suite).unwrap();
        let reparsed = parse_scenario(&text).unwrap();
        let again = scenario_to_json(&reparsed).unwrap();
        assert_eq!(text, again);
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn policy_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        let suite = parse_scenario(SAMPLE).unwrap();
        let policy = PolicyFile {
            produced_by: "train-offline".into(),
            seed: 7,
            logits: LogitPolicy::from_reference(&suite),
        };
        save_policy(&path, &policy).unwrap();
        let loaded = load_policy(&path).unwrap();
        assert_eq!(loaded.logits, policy.logits);
        let bytes_before = std::fs::read(&path).unwrap();
        save_policy(&path, &loaded).unwrap();
        let bytes_after = std::fs::read(&path).unwrap();
        assert_eq!(bytes_before, bytes_after);
    }
}
