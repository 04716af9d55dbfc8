//! Entropy/quality frontiers and the pass@k estimator.
//!
//! Sweeps the reference-free multiplier over a grid and prints the
//! entropy / expected-reward trade-off curve (entropy falls, reward rises
//! as the multiplier grows), then tabulates the unbiased pass@k estimator
//! for a few sample counts.
//!
//! Run with: `cargo run --example frontier_and_pass_at_k`

use qempo::closed_form::MethodParams;
use qempo::instance::{AlignmentInstance, CandidateOutcome, Quality};
use qempo::metrics::{frontier_sweep, pass_at_k, PassAtKInput, OFFLINE_INV_LAMBDA_GRID};

fn main() -> qempo::Result<()> {
    let inst = AlignmentInstance::new(
        "frontier-demo",
        vec![
            CandidateOutcome {
                label: None,
                reward: 1.0,
                quality: Quality::Positive,
                ref_prob: 0.3,
            },
            CandidateOutcome {
                label: None,
                reward: 0.8,
                quality: Quality::Positive,
                ref_prob: 0.3,
            },
            CandidateOutcome {
                label: None,
                reward: 0.3,
                quality: Quality::Negative,
                ref_prob: 0.2,
            },
            CandidateOutcome {
                label: None,
                reward: 0.0,
                quality: Quality::Negative,
                ref_prob: 0.2,
            },
        ],
    )?;

    // a wide multiplier sweep plus the standard inverse grid
    let mut grid: Vec<MethodParams> = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|&lambda| MethodParams::Qempo { lambda })
        .collect();
    grid.extend(
        OFFLINE_INV_LAMBDA_GRID
            .iter()
            .map(|&inv| MethodParams::Qempo { lambda: 1.0 / inv }),
    );

    println!("lambda    entropy   E[r]      quality mass");
    for point in frontier_sweep(&inst, &grid)? {
        let lambda = match point.params {
            MethodParams::Qempo { lambda } => lambda,
            _ => unreachable!(),
        };
        println!(
            "{lambda:<9.3} {:<9.4} {:<9.4} {:.4}",
            point.entropy, point.expected_reward, point.quality_mass
        );
    }

    println!("\npass@k from n samples with c correct (unbiased estimator):");
    println!("{:>6} {:>4} {:>6} {:>10}", "n", "c", "k", "pass@k");
    for (n, c, k) in [
        (4, 2, 2),
        (100, 10, 1),
        (100, 10, 8),
        (100, 10, 16),
        (100, 95, 8),
        (10_000, 17, 100),
    ] {
        let value = pass_at_k(PassAtKInput {
            samples: n,
            correct: c,
            k,
        })?;
        println!("{n:>6} {c:>4} {k:>6} {value:>10.6}");
    }
    Ok(())
}
