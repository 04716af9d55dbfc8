//! The scenario file format: write, load, validate.
//!
//! Scenario suites are plain JSON: a seed plus instances, each instance a
//! list of candidates with a reward, a quality label, and a reference
//! probability. The loader checks every invariant and points at the first
//! violation by instance id and field path; files written by this crate
//! re-serialize byte-identically.
//!
//! Run with: `cargo run --example scenario_files`

use qempo::scenario::{parse_scenario, scenario_to_json};

const SCENARIO: &str = r#"{
  "seed": 42,
  "instances": [
    {
      "id": "translation",
      "candidates": [
        { "label": "faithful", "reward": 1.0, "quality": "positive", "ref_prob": 0.45 },
        { "label": "loose", "reward": 0.7, "quality": "positive", "ref_prob": 0.35 },
        { "label": "garbled", "reward": 0.0, "quality": "negative", "ref_prob": 0.2 }
      ]
    }
  ]
}"#;

fn main() {
    let suite = parse_scenario(SCENARIO).expect("valid scenario");
    println!(
        "loaded suite with seed {} and {} instance(s)",
        suite.seed,
        suite.instances.len()
    );
    for inst in &suite.instances {
        println!(
            "  {:?}: {} candidates, positives {:?}",
            inst.id,
            inst.len(),
            inst.positive_indices()
        );
    }

    let canonical = scenario_to_json(&suite).unwrap();
    let reparsed = parse_scenario(&canonical).unwrap();
    assert_eq!(canonical, scenario_to_json(&reparsed).unwrap());
    println!("\ncanonical serialization round-trips byte-identically");

    // validation errors carry the instance id and field path
    for (what, broken) in [
        ("unnormalized reference", SCENARIO.replace("0.2", "0.3")),
        ("negative probability", SCENARIO.replace("0.35", "-0.35")),
        (
            "unknown field",
            SCENARIO.replacen("\"label\"", "\"lable\"", 1),
        ),
    ] {
        match parse_scenario(&broken) {
            Err(err) => println!("rejected ({what}): {err}"),
            Ok(_) => println!("unexpectedly accepted ({what})"),
        }
    }
}
