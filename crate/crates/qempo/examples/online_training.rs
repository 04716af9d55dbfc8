//! Online group training: the entropy-aware loss against a GRPO baseline,
//! and why the variance term is gated on fully correct groups.
//!
//! Part 1 trains both methods on the bundled online suite (half the
//! candidates correct, half wrong). Both reach near-perfect pass@1; the
//! baseline collapses onto a single correct answer while the gated
//! entropy-aware loss keeps the correct answers evenly covered.
//!
//! Part 2 reproduces the instability the gate prevents: on an instance
//! with no correct candidate at all, forcing the variance term on pumps
//! entropy while the expected reward stays at zero.
//!
//! Run with: `cargo run --example online_training`

use qempo::cli::BUNDLED_ONLINE_SUITE;
use qempo::instance::{AlignmentInstance, CandidateOutcome, Quality, ScenarioSuite};
use qempo::online::{train_online, OnlineConfig, VarianceGate};
use qempo::scenario::parse_scenario;

fn main() -> qempo::Result<()> {
    let suite = parse_scenario(BUNDLED_ONLINE_SUITE)?;
    let qempo_config: OnlineConfig =
        serde_json::from_str(include_str!("../data/online_qempo.json"))
            .expect("bundled config parses");
    let grpo_config: OnlineConfig = serde_json::from_str(include_str!("../data/online_grpo.json"))
        .expect("bundled config parses");

    for (name, config) in [
        ("qempo (gated)", &qempo_config),
        ("grpo baseline", &grpo_config),
    ] {
        let out = train_online(&suite, config)?;
        println!("== {name}");
        for row in &out.history {
            println!(
                "  step {:>4}: entropy {:.4}, E[r] {:.4}, pass@1 {:.3}, pass@8 {:.4}",
                row.step,
                row.entropy_mean,
                row.expected_reward_mean,
                row.pass_at_k[0],
                row.pass_at_k[2]
            );
        }
        println!();
    }

    // the failure mode the quality gate exists for: all candidates wrong
    let all_wrong = AlignmentInstance::new(
        "hopeless",
        vec![
            CandidateOutcome {
                label: None,
                reward: 0.0,
                quality: Quality::Negative,
                ref_prob: 0.55,
            },
            CandidateOutcome {
                label: None,
                reward: 0.0,
                quality: Quality::Negative,
                ref_prob: 0.25,
            },
            CandidateOutcome {
                label: None,
                reward: 0.0,
                quality: Quality::Negative,
                ref_prob: 0.15,
            },
            CandidateOutcome {
                label: None,
                reward: 0.0,
                quality: Quality::Negative,
                ref_prob: 0.05,
            },
        ],
    )?;
    let demo_suite = ScenarioSuite::new(8, vec![all_wrong])?;
    let mut forced_open: OnlineConfig = serde_json::from_str(
        r#"{ "method": "qempo", "group_size": 10, "inv_lambda": 0.2,
             "learning_rate": 40.0, "steps": 400, "seed": 8,
             "variance_gate": "always", "eval_interval": 100,
             "eval_samples": 50, "pass_k_values": [1] }"#,
    )
    .expect("config parses");

    println!("== all candidates wrong, variance gate forced open");
    let out = train_online(&demo_suite, &forced_open)?;
    for row in &out.history {
        println!(
            "  step {:>4}: entropy {:.4} (reward stuck at {:.1})",
            row.step, row.entropy_mean, row.expected_reward_mean
        );
    }
    println!("  entropy climbs with nothing gained: the unstable regime");

    forced_open.variance_gate = VarianceGate::AllCorrect;
    let out = train_online(&demo_suite, &forced_open)?;
    let first = &out.history[0];
    let last = out.history.last().unwrap();
    println!("== same run with the all-correct gate (the default)");
    println!(
        "  entropy {:.4} -> {:.4}: the gate never opens, the policy stays put",
        first.entropy_mean, last.entropy_mean
    );
    Ok(())
}
