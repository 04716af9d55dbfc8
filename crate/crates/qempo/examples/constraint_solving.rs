//! From constraint levels to multipliers.
//!
//! Reads the reward floor and KL budget off an RLHF anchor policy, then
//! recovers multipliers that make the constraints bind: bisection for the
//! floor-only program, nested bisection for the floor-plus-budget program.
//! Ends with the KKT report certifying a solution and the three boundary
//! statuses (slack, saturated, infeasible).
//!
//! Run with: `cargo run --example constraint_solving`

use qempo::instance::{AlignmentInstance, CandidateOutcome, Quality};
use qempo::solver::{
    constraint_levels, interior_kl_budget, solve_qempo_kl_multipliers, solve_qempo_multiplier,
    verify_kkt, ConstraintSpec, KktProgram, DEFAULT_MAX_ITERS,
};

fn instance() -> qempo::Result<AlignmentInstance> {
    AlignmentInstance::new(
        "graded",
        vec![
            CandidateOutcome {
                label: None,
                reward: 1.0,
                quality: Quality::Positive,
                ref_prob: 0.2,
            },
            CandidateOutcome {
                label: None,
                reward: 0.6,
                quality: Quality::Positive,
                ref_prob: 0.5,
            },
            CandidateOutcome {
                label: None,
                reward: 0.2,
                quality: Quality::Negative,
                ref_prob: 0.3,
            },
        ],
    )
}

fn main() -> qempo::Result<()> {
    let inst = instance()?;
    let beta = 1.0;
    let tol = 1e-10;

    let levels = constraint_levels(&inst, beta)?;
    println!(
        "levels from the RLHF anchor at beta {beta}: floor R = {:.6}, budget K = {:.6}",
        levels.reward_floor,
        levels.kl_budget.unwrap()
    );

    // floor-only program: one multiplier by bisection
    let solve = solve_qempo_multiplier(&inst, levels.reward_floor, tol)?;
    println!(
        "\nfloor-only: lambda = {:.6} ({:?} after {} iterations), E[r] residual {:+.1e}",
        solve.lambda, solve.status, solve.iterations, solve.reward_residual
    );
    println!("  policy {:?}", round4(&solve.dist.probs));

    // floor plus a KL budget with room to bind
    let budget = interior_kl_budget(&inst, beta, tol, 0.02)?;
    let spec = ConstraintSpec {
        reward_floor: levels.reward_floor,
        kl_budget: Some(budget),
    };
    let solve = solve_qempo_kl_multipliers(&inst, &spec, tol, DEFAULT_MAX_ITERS)?;
    println!(
        "\nfloor + budget K = {budget:.6}: lambda1 = {:.4}, lambda2 = {:.4} \
         (reward {:?}, kl {:?}, {} iterations)",
        solve.lambda1, solve.lambda2, solve.reward_status, solve.kl_status, solve.iterations
    );
    println!("  policy {:?}", round4(&solve.dist.probs));

    let kkt = verify_kkt(
        &inst,
        &solve.dist,
        &spec,
        &KktProgram::EntropyMaxWithKl {
            lambda1: solve.lambda1,
            lambda2: solve.lambda2,
        },
        1e-7,
    )?;
    println!(
        "  KKT: stationarity {} (spread {:.1e}), primal {}, dual {}, complementary slackness {}",
        kkt.stationarity.passed,
        kkt.stationarity.residual,
        kkt.primal_feasibility.passed,
        kkt.dual_feasibility.passed,
        kkt.complementary_slackness.passed
    );

    // boundary statuses
    println!();
    let slack = solve_qempo_multiplier(&inst, 0.3, tol)?;
    println!(
        "floor 0.3 below the uniform mean: {:?}, lambda {}",
        slack.status, slack.lambda
    );
    let saturated = solve_qempo_multiplier(&inst, 1.0, tol)?;
    println!(
        "floor at the maximum reward: {:?}, policy {:?}",
        saturated.status,
        round4(&saturated.dist.probs)
    );
    let infeasible = solve_qempo_multiplier(&inst, 1.2, tol)?;
    println!(
        "floor above the maximum reward: {:?}, best shortfall {:+.3}",
        infeasible.status, infeasible.reward_residual
    );
    Ok(())
}

fn round4(v: &[f64]) -> Vec<f64> {
    v.iter().map(|p| (p * 1e4).round() / 1e4).collect()
}
