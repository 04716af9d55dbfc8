//! Command-line front end: reproducible runs binding scenarios, solvers,
//! trainers, verification, and report emission.
//!
//! Exit-code contract: 0 on full success, 2 when any instance is
//! infeasible (or any verification check fails), 1 on errors. Identical
//! (scenario, config, seed) inputs reproduce byte-identical CSV outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::closed_form::{
    closed_form_policy, implied_reward, qempo_kl_optimal, qempo_optimal, rlhf_optimal,
    tempered_entropy_derivative, tempered_softmax, ClosedFormResult, MethodParams,
};
use crate::error::{Error, Result};
use crate::instance::{AlignmentInstance, PolicyDistribution, Quality};
use crate::measures::{
    alignment_kl_decomposition, entropy, mean_center, policy_gradient_objective, quality_mass,
    softmax_from_logits,
};
use crate::metrics::{
    frontier_sweep, pass_at_k, FrontierPoint, PassAtKInput, OFFLINE_INV_LAMBDA_GRID,
};
use crate::offline::{train_offline, OfflineConfig};
use crate::online::{train_online, OnlineConfig};
use crate::oracle::{
    brute_force_max_entropy, brute_force_min_kl, entropy_grid_gap, kl_grid_gap, SimplexGrid,
    MAX_GRID_DIMENSION,
};
use crate::scenario::{load_scenario, parse_scenario, save_policy, write_json, PolicyFile};
use crate::seeding::stream_rng;
use crate::solver::{
    constraint_levels, interior_kl_budget, solve_qempo_kl_multipliers, solve_qempo_multiplier,
    verify_kkt, ConstraintSpec, ConstraintStatus, KktProgram, DEFAULT_MAX_ITERS,
};

/// Scenario bundled into the binary and used by `verify` when no path is
/// given.
pub const BUNDLED_VERIFY_SUITE: &str = include_str!("../data/verify_suite.json");
/// Bundled offline-training suite (instances with several equally rewarded
/// positive candidates under a skewed reference).
pub const BUNDLED_OFFLINE_SUITE: &str = include_str!("../data/offline_suite.json");
/// Bundled online-training suite (half correct, half wrong candidates).
pub const BUNDLED_ONLINE_SUITE: &str = include_str!("../data/online_suite.json");

#[derive(Debug, Parser)]
#[command(
    name = "qempo",
    version,
    about = "Entropy-maximizing alignment laboratory on finite candidate spaces"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct GlobalOpts {
    /// Overrides the scenario/config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Residual tolerance for solvers and verification.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol: f64,
    /// Iteration cap for the two-multiplier solver.
    #[arg(long, global = true, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    /// Directory for result files.
    #[arg(long, global = true, default_value = "qempo-out")]
    pub out_dir: PathBuf,
    /// Worker threads for instance-parallel commands (0 = rayon default).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Rlhf,
    Qempo,
    QempoKl,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form policies at given multipliers, or multipliers solved
    /// from constraint levels.
    Solve(SolveArgs),
    /// Checks every analytical claim against oracles on a scenario.
    Verify(VerifyArgs),
    /// Preference-pair training with the DPO / QEMPO / QEMPO-KL losses.
    TrainOffline(TrainArgs),
    /// Group-sampling training with the online losses and quality gate.
    TrainOnline(TrainArgs),
    /// Entropy/reward/quality trade-off along a multiplier grid.
    Frontier(FrontierArgs),
    /// The unbiased pass@k estimator for explicit counts.
    PassAtK(PassAtKArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Scenario file.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// RLHF inverse temperature.
    #[arg(long)]
    pub beta: Option<f64>,
    /// QEMPO multiplier.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// QEMPO multiplier given as 1/lambda.
    #[arg(long)]
    pub inv_lambda: Option<f64>,
    /// QEMPO-KL reward multiplier.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// QEMPO-KL reward multiplier given as 1/lambda1.
    #[arg(long)]
    pub inv_lambda1: Option<f64>,
    /// QEMPO-KL divergence multiplier.
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// QEMPO-KL divergence multiplier given as lambda2/lambda1.
    #[arg(long)]
    pub ratio21: Option<f64>,
    /// Solve the multiplier(s) so this expected-reward floor binds.
    #[arg(long)]
    pub reward_floor: Option<f64>,
    /// Solve with this KL budget as the second constraint.
    #[arg(long)]
    pub kl_budget: Option<f64>,
    /// Take the reward floor (and KL budget) from the RLHF policy at this
    /// inverse temperature.
    #[arg(long)]
    pub levels_from_beta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Scenario file; the bundled suite when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Simplex-grid resolution for the brute-force certifications.
    #[arg(long, default_value_t = 0.01)]
    pub grid_step: f64,
    /// Inverse temperature anchoring the certification levels.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Negative control: perturb each closed form before checking its
    /// first-order conditions, which must then fail.
    #[arg(long)]
    pub self_test_perturb: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Scenario file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Training config (JSON mirroring the config struct fields).
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct FrontierArgs {
    /// Scenario file.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Comma-separated multiplier values (beta for rlhf, lambda for qempo,
    /// lambda1:lambda2 pairs for qempo-kl).
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
    /// Interpret scalar values as inverses (1/lambda or 1/beta).
    #[arg(long)]
    pub inverse: bool,
    /// Named grid preset; `inv-lambda-default` sweeps the standard
    /// inverse-lambda grid for qempo.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct PassAtKArgs {
    /// Samples drawn per problem.
    #[arg(long)]
    pub samples: usize,
    /// Correct samples among them.
    #[arg(long)]
    pub correct: usize,
    /// Target k (repeatable).
    #[arg(long = "k", required = true)]
    pub k_values: Vec<usize>,
}

/// Provenance of every emitted result file.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub tol: f64,
    pub config: serde_json::Value,
    pub artifact_version: String,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

struct ManifestBuilder {
    command: String,
    seed: u64,
    tol: f64,
    config: serde_json::Value,
    outputs: Vec<String>,
    started: Instant,
}

impl ManifestBuilder {
    fn new(command: &str, seed: u64, tol: f64, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            seed,
            tol,
            config,
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    fn record(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    fn write(mut self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join("manifest.json");
        self.outputs.push(path.display().to_string());
        let manifest = RunManifest {
            command: self.command,
            seed: self.seed,
            tol: self.tol,
            config: self.config,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self.outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        write_json(&path, &manifest)
    }
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = String::with_capacity(rows.len() * 64 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if cli.global.threads > 0 {
        // best effort; a pool may already exist in tests
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.threads)
            .build_global();
    }
    let outcome = match &cli.command {
        Command::Solve(args) => cmd_solve(&cli.global, args),
        Command::Verify(args) => cmd_verify(&cli.global, args),
        Command::TrainOffline(args) => cmd_train_offline(&cli.global, args),
        Command::TrainOnline(args) => cmd_train_online(&cli.global, args),
        Command::Frontier(args) => cmd_frontier(&cli.global, args),
        Command::PassAtK(args) => cmd_pass_at_k(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            1
        }
    }
}

// ---------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------

/// How the multipliers in a solve record were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierSource {
    /// Supplied directly as hyperparameters.
    Direct,
    /// Solved from constraint levels.
    Solved,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolveRecord {
    pub instance_id: String,
    pub source: MultiplierSource,
    pub params: MethodParams,
    pub probs: Vec<f64>,
    /// `ln Z` of the defining softmax; present for directly parameterized
    /// closed forms.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub log_partition: Option<f64>,
    pub entropy: f64,
    pub expected_reward: f64,
    pub kl_to_ref: Option<f64>,
    pub quality_mass: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub support_excluded: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reward_status: Option<ConstraintStatus>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kl_status: Option<ConstraintStatus>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reward_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kl_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub iterations: Option<usize>,
}

fn record_from_closed_form(
    inst: &AlignmentInstance,
    source: MultiplierSource,
    params: MethodParams,
    cf: &ClosedFormResult,
) -> Result<SolveRecord> {
    Ok(SolveRecord {
        instance_id: inst.id.clone(),
        source,
        params,
        probs: cf.dist.probs.clone(),
        log_partition: Some(cf.log_partition),
        entropy: cf.entropy,
        expected_reward: cf.expected_reward,
        kl_to_ref: cf.kl_to_ref,
        quality_mass: quality_mass(&cf.dist, inst)?,
        support_excluded: cf.support_excluded.clone(),
        reward_status: None,
        kl_status: None,
        reward_residual: None,
        kl_residual: None,
        iterations: None,
    })
}

fn direct_params(args: &SolveArgs) -> Result<Option<MethodParams>> {
    let lambda = match (args.lambda, args.inv_lambda) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidArgument(
                "give either --lambda or --inv-lambda, not both".into(),
            ))
        }
        (Some(l), None) => Some(l),
        (None, Some(inv)) => Some(1.0 / inv),
        (None, None) => None,
    };
    let lambda1 = match (args.lambda1, args.inv_lambda1) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidArgument(
                "give either --lambda1 or --inv-lambda1, not both".into(),
            ))
        }
        (Some(l), None) => Some(l),
        (None, Some(inv)) => Some(1.0 / inv),
        (None, None) => None,
    };
    Ok(match args.method {
        MethodArg::Rlhf => args.beta.map(|beta| MethodParams::Rlhf { beta }),
        MethodArg::Qempo => lambda.map(|lambda| MethodParams::Qempo { lambda }),
        MethodArg::QempoKl => {
            let lambda1 = match lambda1 {
                Some(l) => l,
                None => return Ok(None),
            };
            let lambda2 = match (args.lambda2, args.ratio21) {
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidArgument(
                        "give either --lambda2 or --ratio21, not both".into(),
                    ))
                }
                (Some(l2), None) => l2,
                (None, Some(r)) => r * lambda1,
                (None, None) => {
                    return Err(Error::InvalidArgument(
                        "qempo-kl needs --lambda2 or --ratio21".into(),
                    ))
                }
            };
            Some(MethodParams::QempoKl { lambda1, lambda2 })
        }
    })
}

fn cmd_solve(global: &GlobalOpts, args: &SolveArgs) -> Result<i32> {
    let suite = load_scenario(&args.scenario)?;
    let seed = global.seed.unwrap_or(suite.seed);
    let params = direct_params(args)?;
    let mut any_infeasible = false;
    let mut records = Vec::new();

    for inst in &suite.instances {
        let record = if let Some(params) = params {
            let cf = closed_form_policy(inst, &params)?;
            record_from_closed_form(inst, MultiplierSource::Direct, params, &cf)?
        } else {
            // constraint levels: explicit or anchored at an RLHF policy
            let (floor, budget) = if let Some(beta) = args.levels_from_beta {
                let levels = constraint_levels(inst, beta)?;
                match args.method {
                    MethodArg::QempoKl => (levels.reward_floor, levels.kl_budget),
                    _ => (levels.reward_floor, None),
                }
            } else {
                let floor = args.reward_floor.ok_or_else(|| {
                    Error::InvalidArgument(
                        "give multipliers, --reward-floor, or --levels-from-beta".into(),
                    )
                })?;
                (floor, args.kl_budget)
            };
            match args.method {
                MethodArg::Rlhf => {
                    return Err(Error::InvalidArgument(
                        "rlhf takes --beta directly; constraint-level solving applies to \
                         qempo and qempo-kl"
                            .into(),
                    ))
                }
                MethodArg::Qempo => {
                    let solve = solve_qempo_multiplier(inst, floor, global.tol)?;
                    any_infeasible |= solve.status == ConstraintStatus::Infeasible;
                    let params = MethodParams::Qempo {
                        lambda: solve.lambda,
                    };
                    let dist = solve.dist.clone();
                    SolveRecord {
                        instance_id: inst.id.clone(),
                        source: MultiplierSource::Solved,
                        params,
                        probs: dist.probs.clone(),
                        log_partition: None,
                        entropy: entropy(&dist),
                        expected_reward: crate::measures::expected_reward(&dist, inst)?,
                        kl_to_ref: crate::measures::kl_divergence(&dist, &inst.ref_policy()).ok(),
                        quality_mass: quality_mass(&dist, inst)?,
                        support_excluded: Vec::new(),
                        reward_status: Some(solve.status),
                        kl_status: None,
                        reward_residual: Some(solve.reward_residual),
                        kl_residual: None,
                        iterations: Some(solve.iterations),
                    }
                }
                MethodArg::QempoKl => {
                    let budget = budget.ok_or_else(|| {
                        Error::InvalidArgument(
                            "qempo-kl solving needs --kl-budget or --levels-from-beta".into(),
                        )
                    })?;
                    let spec = ConstraintSpec {
                        reward_floor: floor,
                        kl_budget: Some(budget),
                    };
                    let solve =
                        solve_qempo_kl_multipliers(inst, &spec, global.tol, global.max_iters)?;
                    any_infeasible |= solve.reward_status == ConstraintStatus::Infeasible;
                    let dist = solve.dist.clone();
                    SolveRecord {
                        instance_id: inst.id.clone(),
                        source: MultiplierSource::Solved,
                        params: MethodParams::QempoKl {
                            lambda1: solve.lambda1,
                            lambda2: solve.lambda2,
                        },
                        probs: dist.probs.clone(),
                        log_partition: None,
                        entropy: entropy(&dist),
                        expected_reward: crate::measures::expected_reward(&dist, inst)?,
                        kl_to_ref: crate::measures::kl_divergence(&dist, &inst.ref_policy()).ok(),
                        quality_mass: quality_mass(&dist, inst)?,
                        support_excluded: Vec::new(),
                        reward_status: Some(solve.reward_status),
                        kl_status: Some(solve.kl_status),
                        reward_residual: Some(solve.reward_residual),
                        kl_residual: Some(solve.kl_residual),
                        iterations: Some(solve.iterations),
                    }
                }
            }
        };
        println!(
            "{}: entropy {:.6}, expected reward {:.6}, quality mass {:.6}",
            record.instance_id, record.entropy, record.expected_reward, record.quality_mass
        );
        records.push(record);
    }

    let mut manifest = ManifestBuilder::new(
        "solve",
        seed,
        global.tol,
        serde_json::json!({
            "scenario": args.scenario.display().to_string(),
            "method": format!("{:?}", args.method),
        }),
    );
    let report_path = global.out_dir.join("solve_report.json");
    write_json(&report_path, &records)?;
    manifest.record(&report_path);
    manifest.write(&global.out_dir)?;
    Ok(if any_infeasible { 2 } else { 0 })
}

// ---------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub instance_id: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub failures: usize,
}

fn check(
    results: &mut Vec<CheckResult>,
    name: &str,
    instance_id: &str,
    outcome: std::result::Result<bool, String>,
    detail: impl Into<String>,
) {
    let (status, detail) = match outcome {
        Ok(true) => (CheckStatus::Pass, detail.into()),
        Ok(false) => (CheckStatus::Fail, detail.into()),
        Err(reason) => (CheckStatus::Skipped, reason),
    };
    results.push(CheckResult {
        check: name.to_string(),
        instance_id: instance_id.to_string(),
        status,
        detail,
    });
}

/// Random strictly positive distribution for identity checks.
fn random_positive_dist(inst: &AlignmentInstance, rng: &mut impl Rng) -> PolicyDistribution {
    let logits: Vec<f64> = (0..inst.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    PolicyDistribution {
        instance_id: inst.id.clone(),
        probs: softmax_from_logits(&logits).expect("finite logits"),
    }
}

fn verify_instance(
    inst: &AlignmentInstance,
    args: &VerifyArgs,
    tol: f64,
    seed: u64,
) -> Result<Vec<CheckResult>> {
    let mut results = Vec::new();
    let mut rng = stream_rng(seed, &format!("verify/{}", inst.id));
    let n = inst.len();
    let has_both_classes = inst.require_both_classes().is_ok();
    let rewards = inst.rewards();
    let min_ref = inst
        .ref_probs()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);

    // objective decomposition: KL to the ideal policy splits into
    // -entropy - quality_term
    if has_both_classes {
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for _ in 0..50 {
            for eps in [0.01, crate::measures::DEFAULT_IDEAL_EPSILON, 0.1] {
                let dist = random_positive_dist(inst, &mut rng);
                match alignment_kl_decomposition(&dist, inst, eps) {
                    Ok(dec) => {
                        worst = worst.max(dec.identity_residual().abs());
                        ok &= dec.identity_residual().abs() <= 1e-9;
                    }
                    Err(e) => {
                        ok = false;
                        worst = f64::INFINITY;
                        let _ = e;
                    }
                }
            }
        }
        check(
            &mut results,
            "decomposition-identity",
            &inst.id,
            Ok(ok),
            format!("max |kl + entropy + quality_term| = {worst:.3e}"),
        );
    } else {
        check(
            &mut results,
            "decomposition-identity",
            &inst.id,
            Err("needs both quality classes".into()),
            "",
        );
    }

    // with 0/1 quality rewards the policy-gradient objective is exactly
    // the quality mass
    let binary_rewards = inst.candidates.iter().all(|c| {
        (c.quality == Quality::Positive && c.reward == 1.0)
            || (c.quality == Quality::Negative && c.reward == 0.0)
    });
    if binary_rewards {
        let mut ok = true;
        for _ in 0..100 {
            let dist = random_positive_dist(inst, &mut rng);
            ok &= policy_gradient_objective(&dist, inst)? == quality_mass(&dist, inst)?;
        }
        check(
            &mut results,
            "quality-only-gradient",
            &inst.id,
            Ok(ok),
            "reward maximization moved only the quality component",
        );
    } else {
        check(
            &mut results,
            "quality-only-gradient",
            &inst.id,
            Err("rewards are not the 0/1 quality indicator".into()),
            "",
        );
    }

    // tempered-softmax entropy monotonicity and its derivative
    {
        let mut ok = true;
        let mut detail = String::new();
        for _ in 0..50 {
            let s1 = rng.gen_range(0.05..2.0);
            let s2 = s1 * rng.gen_range(1.0..4.0);
            let h = |s: f64| -> Result<f64> {
                let probs = tempered_softmax(&rewards, s)?;
                PolicyDistribution::new(inst.id.clone(), probs).map(|d| entropy(&d))
            };
            if h(s2)? > h(s1)? + 1e-12 {
                ok = false;
                detail = format!("entropy rose from s={s1} to s={s2}");
                break;
            }
            let analytic = tempered_entropy_derivative(&rewards, s1)?;
            let step = 1e-6;
            let numeric = (h(s1 + step)? - h(s1 - step)?) / (2.0 * step);
            if (analytic - numeric).abs() > 1e-5 * numeric.abs().max(1e-4) {
                ok = false;
                detail = format!("derivative {analytic} vs finite difference {numeric} at s={s1}");
                break;
            }
        }
        let constant = rewards.windows(2).all(|w| w[0] == w[1]);
        if constant {
            ok &= tempered_entropy_derivative(&rewards, 1.0)? == 0.0;
        }
        check(
            &mut results,
            "tempered-entropy-monotonicity",
            &inst.id,
            Ok(ok),
            if detail.is_empty() {
                "entropy nonincreasing in the temperature multiplier".to_string()
            } else {
                detail
            },
        );
    }

    // implied-reward round trips for all three closed forms
    {
        let mut ok = true;
        let mut worst: f64 = 0.0;
        let param_sets = [
            MethodParams::Rlhf { beta: 0.7 },
            MethodParams::Qempo { lambda: 1.3 },
            MethodParams::QempoKl {
                lambda1: 1.1,
                lambda2: 0.6,
            },
        ];
        for params in param_sets {
            if min_ref <= 0.0 && !matches!(params, MethodParams::Qempo { .. }) {
                continue;
            }
            let cf = closed_form_policy(inst, &params)?;
            let implied = implied_reward(&cf.dist, inst, &params)?;
            let centered = mean_center(&implied);
            let target = mean_center(&rewards);
            for (a, b) in centered.iter().zip(&target) {
                worst = worst.max((a - b).abs());
                ok &= (a - b).abs() <= 1e-9;
            }
        }
        check(
            &mut results,
            "implied-reward-round-trip",
            &inst.id,
            Ok(ok),
            format!("max centered deviation {worst:.3e}"),
        );
    }

    // entropy ordering: KL-budget policies are at least as diverse as the
    // RLHF anchor when the multiplier ratio matches 1/beta
    if min_ref > 0.0 {
        let mut ok = true;
        let mut worst = f64::INFINITY;
        for beta in [0.1, 1.0, 10.0] {
            let anchor = rlhf_optimal(inst, beta)?;
            for lambda2 in [0.1, 1.0, 10.0] {
                let lambda1 = lambda2 / beta;
                let kl_form = qempo_kl_optimal(inst, lambda1, lambda2)?;
                let margin = kl_form.entropy - anchor.entropy;
                worst = worst.min(margin);
                ok &= margin >= -1e-9;
            }
        }
        check(
            &mut results,
            "kl-budget-entropy-ordering",
            &inst.id,
            Ok(ok),
            format!("min entropy margin {worst:.3e}"),
        );
    } else {
        check(
            &mut results,
            "kl-budget-entropy-ordering",
            &inst.id,
            Err("reference has zero-probability candidates".into()),
            "",
        );
    }

    // entropy ordering: dropping the KL budget can only raise entropy,
    // within the small-coupling regime
    if min_ref >= 0.05 {
        let mut ok = true;
        let mut worst = f64::INFINITY;
        for _ in 0..50 {
            let lambda2 = 10f64.powf(rng.gen_range(-1.0..1.0));
            let lambda1 = lambda2 * 10f64.powf(rng.gen_range(-1.0..3.0));
            let cap = (lambda1 / (lambda2 + 1.0)).min(0.01 * lambda1 / lambda2);
            let lambda = rng.gen_range(1e-6..1.0) * cap;
            let floor_only = qempo_optimal(inst, lambda)?;
            let with_budget = qempo_kl_optimal(inst, lambda1, lambda2)?;
            let margin = floor_only.entropy - with_budget.entropy;
            worst = worst.min(margin);
            ok &= margin >= -1e-6;
        }
        check(
            &mut results,
            "reward-floor-entropy-ordering",
            &inst.id,
            Ok(ok),
            format!("min entropy margin {worst:.3e}"),
        );
    } else {
        check(
            &mut results,
            "reward-floor-entropy-ordering",
            &inst.id,
            Err("outside regime: reference entries below 0.05".into()),
            "",
        );
    }

    // brute-force certifications (guarded by grid tractability)
    let grid_available = n <= MAX_GRID_DIMENSION && min_ref > 0.0;
    if grid_available {
        let grid = SimplexGrid::new(n, args.grid_step)?;
        let levels = constraint_levels(inst, args.beta)?;

        // KL minimization under the reward floor tracks the tilted
        // reference
        {
            let anchor = rlhf_optimal(inst, args.beta)?;
            let mut dist = anchor.dist.clone();
            if args.self_test_perturb {
                perturb(&mut dist);
            }
            let opt = brute_force_min_kl(inst, levels.reward_floor, &grid)?;
            let max_log_ratio = dist
                .probs
                .iter()
                .zip(inst.ref_probs())
                .filter(|(&p, _)| p > 0.0)
                .map(|(&p, q)| (p / q).ln().abs())
                .fold(0.0, f64::max);
            let gap = kl_grid_gap(n, args.grid_step, max_log_ratio);
            let anchor_kl = anchor.kl_to_ref.unwrap_or(f64::INFINITY);
            let grid_ok = opt
                .best
                .as_ref()
                .map(|_| (opt.value - anchor_kl).abs() <= gap)
                .unwrap_or(false);
            let kkt = verify_kkt(
                inst,
                &dist,
                &ConstraintSpec {
                    reward_floor: levels.reward_floor,
                    kl_budget: None,
                },
                &KktProgram::KlMin {
                    lambda: 1.0 / args.beta,
                },
                tol,
            )?;
            check(
                &mut results,
                "kl-min-certification",
                &inst.id,
                Ok(grid_ok && kkt.passed()),
                format!(
                    "grid gap {:.3e} (bound {gap:.3e}), stationarity residual {:.3e}",
                    (opt.value - anchor_kl).abs(),
                    kkt.stationarity.residual
                ),
            );
        }

        // entropy maximization under the reward floor
        {
            let solve = solve_qempo_multiplier(inst, levels.reward_floor, (tol * 1e-2).min(1e-10))?;
            let mut dist = solve.dist.clone();
            if args.self_test_perturb {
                perturb(&mut dist);
            }
            let opt = brute_force_max_entropy(inst, levels.reward_floor, None, &grid)?;
            let gap = entropy_grid_gap(n, args.grid_step);
            let analytic = entropy(&dist);
            let grid_ok = opt
                .best
                .as_ref()
                .map(|_| (opt.value - analytic).abs() <= gap)
                .unwrap_or(false);
            let kkt_ok = if solve.status == ConstraintStatus::Binding {
                verify_kkt(
                    inst,
                    &dist,
                    &ConstraintSpec {
                        reward_floor: levels.reward_floor,
                        kl_budget: None,
                    },
                    &KktProgram::EntropyMax {
                        lambda: solve.lambda,
                    },
                    tol,
                )?
                .passed()
            } else {
                true
            };
            check(
                &mut results,
                "entropy-max-certification",
                &inst.id,
                Ok(grid_ok && kkt_ok),
                format!(
                    "grid gap {:.3e} (bound {gap:.3e}), multiplier {:.4} ({:?})",
                    (opt.value - analytic).abs(),
                    solve.lambda,
                    solve.status
                ),
            );
        }

        // entropy maximization under the floor plus a KL budget chosen to
        // bind without collapsing the feasible set; the width floor tracks
        // the KL resolution of the grid near the anchor
        {
            let anchor = rlhf_optimal(inst, args.beta)?;
            let anchor_log_ratio = anchor
                .dist
                .probs
                .iter()
                .zip(inst.ref_probs())
                .filter(|(&p, _)| p > 0.0)
                .map(|(&p, q)| (p / q).ln().abs())
                .fold(0.0, f64::max);
            let budget = interior_kl_budget(
                inst,
                args.beta,
                (tol * 1e-2).min(1e-10),
                kl_grid_gap(n, args.grid_step, anchor_log_ratio),
            )?;
            let spec = ConstraintSpec {
                reward_floor: levels.reward_floor,
                kl_budget: Some(budget),
            };
            let solve = solve_qempo_kl_multipliers(
                inst,
                &spec,
                (tol * 1e-2).min(1e-10),
                DEFAULT_MAX_ITERS,
            )?;
            let mut dist = solve.dist.clone();
            if args.self_test_perturb {
                perturb(&mut dist);
            }
            let opt = brute_force_max_entropy(inst, levels.reward_floor, Some(budget), &grid)?;
            let gap = entropy_grid_gap(n, args.grid_step);
            let analytic = entropy(&dist);
            let grid_ok = opt
                .best
                .as_ref()
                .map(|_| (opt.value - analytic).abs() <= gap)
                .unwrap_or(false);
            let kkt = verify_kkt(
                inst,
                &dist,
                &spec,
                &KktProgram::EntropyMaxWithKl {
                    lambda1: solve.lambda1,
                    lambda2: solve.lambda2,
                },
                tol.max(1e-7),
            )?;
            check(
                &mut results,
                "entropy-max-kl-certification",
                &inst.id,
                Ok(grid_ok && kkt.passed()),
                format!(
                    "grid gap {:.3e} (bound {gap:.3e}), multipliers ({:.4}, {:.4})",
                    (opt.value - analytic).abs(),
                    solve.lambda1,
                    solve.lambda2
                ),
            );
        }
    } else {
        let reason = if n > MAX_GRID_DIMENSION {
            format!("{n} candidates exceed the enumeration guard ({MAX_GRID_DIMENSION})")
        } else {
            "reference has zero-probability candidates".to_string()
        };
        for name in [
            "kl-min-certification",
            "entropy-max-certification",
            "entropy-max-kl-certification",
        ] {
            check(&mut results, name, &inst.id, Err(reason.clone()), "");
        }
    }

    Ok(results)
}

fn perturb(dist: &mut PolicyDistribution) {
    // shifts a little mass between the extreme entries; enough to break
    // first-order conditions at any reasonable tolerance
    let n = dist.probs.len();
    let delta = 0.05 * dist.probs[0].min(dist.probs[n - 1]).min(0.2);
    dist.probs[0] += delta;
    dist.probs[n - 1] -= delta;
}

fn cmd_verify(global: &GlobalOpts, args: &VerifyArgs) -> Result<i32> {
    let suite = match &args.scenario {
        Some(path) => load_scenario(path)?,
        None => parse_scenario(BUNDLED_VERIFY_SUITE)?,
    };
    let seed = global.seed.unwrap_or(suite.seed);

    use rayon::prelude::*;
    let per_instance: Vec<Vec<CheckResult>> = suite
        .instances
        .par_iter()
        .map(|inst| verify_instance(inst, args, global.tol, seed))
        .collect::<Result<Vec<_>>>()?;

    let mut checks = Vec::new();
    for group in per_instance {
        checks.extend(group);
    }
    let failures = checks
        .iter()
        .filter(|c| c.status == CheckStatus::Fail)
        .count();
    for c in &checks {
        let status = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        println!(
            "{status}  {:<32} {:<12} {}",
            c.check, c.instance_id, c.detail
        );
    }
    println!(
        "{} checks, {} failures, {} skipped",
        checks.len(),
        failures,
        checks
            .iter()
            .filter(|c| c.status == CheckStatus::Skipped)
            .count()
    );

    let report = VerifyReport { checks, failures };
    let mut manifest = ManifestBuilder::new(
        "verify",
        seed,
        global.tol,
        serde_json::json!({
            "scenario": args.scenario.as_ref().map(|p| p.display().to_string()),
            "grid_step": args.grid_step,
            "beta": args.beta,
            "self_test_perturb": args.self_test_perturb,
        }),
    );
    let report_path = global.out_dir.join("verify_report.json");
    write_json(&report_path, &report)?;
    manifest.record(&report_path);
    manifest.write(&global.out_dir)?;
    Ok(if report.failures > 0 { 2 } else { 0 })
}

// ---------------------------------------------------------------------
// training
// ---------------------------------------------------------------------

/// Formats a float for CSV output (shortest round-trip representation).
fn fmt(v: f64) -> String {
    format!("{v}")
}

fn cmd_train_offline(global: &GlobalOpts, args: &TrainArgs) -> Result<i32> {
    let suite = load_scenario(&args.scenario)?;
    let mut config: OfflineConfig = crate::scenario::read_json(&args.config)?;
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    let outcome = train_offline(&suite, &config)?;

    let rows: Vec<String> = outcome
        .history
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{}",
                r.step,
                fmt(r.loss),
                fmt(r.entropy_mean),
                fmt(r.quality_mass_mean)
            )
        })
        .collect();
    let csv_path = global.out_dir.join("history.csv");
    write_csv(&csv_path, "step,loss,entropy_mean,quality_mass_mean", &rows)?;

    let policy_path = global.out_dir.join("policy.json");
    save_policy(
        &policy_path,
        &PolicyFile {
            produced_by: "train-offline".into(),
            seed: config.seed,
            logits: outcome.policy.clone(),
        },
    )?;

    println!(
        "selected step {} (holdout loss {:.6}); history rows: {}",
        outcome.best_step,
        outcome.best_holdout_loss,
        outcome.history.len()
    );

    let mut manifest = ManifestBuilder::new(
        "train-offline",
        config.seed,
        global.tol,
        serde_json::to_value(&config).map_err(|e| Error::Parse(e.to_string()))?,
    );
    manifest.record(&csv_path);
    manifest.record(&policy_path);
    manifest.write(&global.out_dir)?;
    Ok(0)
}

fn cmd_train_online(global: &GlobalOpts, args: &TrainArgs) -> Result<i32> {
    let suite = load_scenario(&args.scenario)?;
    let mut config: OnlineConfig = crate::scenario::read_json(&args.config)?;
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    let outcome = train_online(&suite, &config)?;

    let method_name = serde_json::to_value(config.method)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| format!("{:?}", config.method));
    let k_header: Vec<String> = config
        .pass_k_values
        .iter()
        .map(|k| format!("pass@{k}"))
        .collect();
    let header = format!(
        "step,method,loss,entropy_mean,expected_reward_mean,{}",
        k_header.join(",")
    );
    let rows: Vec<String> = outcome
        .history
        .iter()
        .map(|r| {
            let ks: Vec<String> = r.pass_at_k.iter().map(|v| fmt(*v)).collect();
            format!(
                "{},{},{},{},{},{}",
                r.step,
                method_name,
                fmt(r.loss),
                fmt(r.entropy_mean),
                fmt(r.expected_reward_mean),
                ks.join(",")
            )
        })
        .collect();
    let csv_path = global.out_dir.join("history.csv");
    write_csv(&csv_path, &header, &rows)?;

    let policy_path = global.out_dir.join("policy.json");
    save_policy(
        &policy_path,
        &PolicyFile {
            produced_by: "train-online".into(),
            seed: config.seed,
            logits: outcome.policy.clone(),
        },
    )?;

    if let Some(last) = outcome.history.last() {
        println!(
            "final: loss {:.6}, entropy {:.4}, expected reward {:.4}",
            last.loss, last.entropy_mean, last.expected_reward_mean
        );
    }

    let mut manifest = ManifestBuilder::new(
        "train-online",
        config.seed,
        global.tol,
        serde_json::to_value(&config).map_err(|e| Error::Parse(e.to_string()))?,
    );
    manifest.record(&csv_path);
    manifest.record(&policy_path);
    manifest.write(&global.out_dir)?;
    Ok(0)
}

// ---------------------------------------------------------------------
// frontier
// ---------------------------------------------------------------------

fn frontier_grid(args: &FrontierArgs) -> Result<Vec<MethodParams>> {
    if let Some(preset) = &args.preset {
        return match preset.as_str() {
            "inv-lambda-default" => Ok(OFFLINE_INV_LAMBDA_GRID
                .iter()
                .map(|&inv| MethodParams::Qempo { lambda: 1.0 / inv })
                .collect()),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset {other:?}; available: inv-lambda-default"
            ))),
        };
    }
    if args.values.is_empty() {
        return Err(Error::InvalidArgument(
            "give --values or --preset for the multiplier grid".into(),
        ));
    }
    args.values
        .iter()
        .map(|raw| {
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad grid value {s:?}: {e}")))
            };
            match args.method {
                MethodArg::Rlhf => {
                    let v = parse(raw)?;
                    Ok(MethodParams::Rlhf {
                        beta: if args.inverse { 1.0 / v } else { v },
                    })
                }
                MethodArg::Qempo => {
                    let v = parse(raw)?;
                    Ok(MethodParams::Qempo {
                        lambda: if args.inverse { 1.0 / v } else { v },
                    })
                }
                MethodArg::QempoKl => {
                    let (a, b) = raw.split_once(':').ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "qempo-kl grid values are lambda1:lambda2 pairs, got {raw:?}"
                        ))
                    })?;
                    let lambda1 = parse(a)?;
                    let lambda1 = if args.inverse { 1.0 / lambda1 } else { lambda1 };
                    Ok(MethodParams::QempoKl {
                        lambda1,
                        lambda2: parse(b)?,
                    })
                }
            }
        })
        .collect()
}

fn frontier_csv_row(instance_id: &str, p: &FrontierPoint) -> String {
    let (method, beta, lambda, lambda1, lambda2) = match p.params {
        MethodParams::Rlhf { beta } => (
            "rlhf",
            fmt(beta),
            String::new(),
            String::new(),
            String::new(),
        ),
        MethodParams::Qempo { lambda } => (
            "qempo",
            String::new(),
            fmt(lambda),
            String::new(),
            String::new(),
        ),
        MethodParams::QempoKl { lambda1, lambda2 } => (
            "qempo-kl",
            String::new(),
            String::new(),
            fmt(lambda1),
            fmt(lambda2),
        ),
    };
    format!(
        "{instance_id},{method},{beta},{lambda},{lambda1},{lambda2},{},{},{}",
        fmt(p.entropy),
        fmt(p.expected_reward),
        fmt(p.quality_mass)
    )
}

fn cmd_frontier(global: &GlobalOpts, args: &FrontierArgs) -> Result<i32> {
    let suite = load_scenario(&args.scenario)?;
    let seed = global.seed.unwrap_or(suite.seed);
    let grid = frontier_grid(args)?;

    use rayon::prelude::*;
    let sweeps: Vec<(String, Vec<FrontierPoint>)> = suite
        .instances
        .par_iter()
        .map(|inst| frontier_sweep(inst, &grid).map(|points| (inst.id.clone(), points)))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (id, points) in &sweeps {
        for p in points {
            rows.push(frontier_csv_row(id, p));
        }
    }
    let csv_path = global.out_dir.join("frontier.csv");
    write_csv(
        &csv_path,
        "instance_id,method,beta,lambda,lambda1,lambda2,entropy,expected_reward,quality_mass",
        &rows,
    )?;
    println!("{} frontier points written", rows.len());

    let mut manifest = ManifestBuilder::new(
        "frontier",
        seed,
        global.tol,
        serde_json::json!({
            "scenario": args.scenario.display().to_string(),
            "method": format!("{:?}", args.method),
            "values": args.values,
            "inverse": args.inverse,
            "preset": args.preset,
        }),
    );
    manifest.record(&csv_path);
    manifest.write(&global.out_dir)?;
    Ok(0)
}

fn cmd_pass_at_k(args: &PassAtKArgs) -> Result<i32> {
    for &k in &args.k_values {
        let value = pass_at_k(PassAtKInput {
            samples: args.samples,
            correct: args.correct,
            k,
        })?;
        println!("pass@{k} = {value}");
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_suites_parse_and_validate() {
        for (name, text) in [
            ("verify", BUNDLED_VERIFY_SUITE),
            ("offline", BUNDLED_OFFLINE_SUITE),
            ("online", BUNDLED_ONLINE_SUITE),
        ] {
            let suite = parse_scenario(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(!suite.instances.is_empty(), "{name} suite is empty");
        }
    }

    #[test]
    fn direct_params_resolve_inverse_forms() {
        let args = SolveArgs {
            scenario: PathBuf::new(),
            method: MethodArg::QempoKl,
            beta: None,
            lambda: None,
            inv_lambda: None,
            lambda1: None,
            inv_lambda1: Some(4e-3),
            lambda2: None,
            ratio21: Some(1e-2),
            reward_floor: None,
            kl_budget: None,
            levels_from_beta: None,
        };
        let params = direct_params(&args).unwrap().unwrap();
        match params {
            MethodParams::QempoKl { lambda1, lambda2 } => {
                assert!((lambda1 - 250.0).abs() < 1e-9);
                assert!((lambda2 - 2.5).abs() < 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
