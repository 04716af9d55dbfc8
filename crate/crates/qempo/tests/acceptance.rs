//! Acceptance suite: every exit criterion of the project, one test per
//! criterion, each printing a single pass/fail line. Tolerances are pinned
//! in the assertions.
//!
//! Run with `cargo test -p qempo --test acceptance -- --nocapture` to see
//! the criterion lines.

mod common;

use clap::Parser;
use common::*;
use qempo::cli::{run, Cli, BUNDLED_OFFLINE_SUITE, BUNDLED_ONLINE_SUITE};
use qempo::closed_form::{
    closed_form_policy, implied_reward, qempo_kl_optimal, qempo_optimal, rlhf_optimal,
    tempered_entropy_derivative, tempered_softmax, MethodParams,
};
use qempo::instance::{LogitPolicy, PolicyDistribution, ScenarioSuite};
use qempo::measures::{
    alignment_kl_decomposition, entropy, mean_center, policy_gradient_objective, quality_mass,
};
use qempo::metrics::{pass_at_k, PassAtKInput};
use qempo::offline::{
    dpo_loss, offline_gradient, qempo_kl_offline_loss, qempo_offline_loss, sample_preferences,
    train_offline, OfflineConfig, OfflineMethod,
};
use qempo::online::{
    centered_implied_reward_mse, group_loss_gradient, mse_identity_offset, qempo_kl_online_loss,
    qempo_online_loss, train_online, OnlineConfig, OnlineMethod, VarianceGate,
};
use qempo::oracle::{
    brute_force_max_entropy, brute_force_min_kl, entropy_grid_gap, finite_diff_gradient,
    kl_grid_gap, SimplexGrid,
};
use qempo::scenario::parse_scenario;
use qempo::seeding::stream_rng;
use qempo::solver::{
    constraint_levels, interior_kl_budget, solve_qempo_kl_multipliers, solve_qempo_multiplier,
    verify_kkt, ConstraintSpec, ConstraintStatus, KktProgram, DEFAULT_MAX_ITERS,
};
use rand::Rng;

fn report(number: u32, name: &str, ok: bool, detail: &str) {
    let status = if ok { "PASS" } else { "FAIL" };
    println!("criterion {number:02} ({name}): {status}  {detail}");
    assert!(ok, "criterion {number:02} ({name}) failed: {detail}");
}

#[test]
fn criterion_01_decomposition_identity() {
    let mut rng = stream_rng(101, "c1");
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.gen_range(3..=6);
        let inst = random_instance(&mut rng, &format!("c1-{case}"), n);
        let dist = random_distribution(&mut rng, &inst);
        for eps in [0.01, 0.05, 0.1] {
            let dec = alignment_kl_decomposition(&dist, &inst, eps).unwrap();
            worst = worst.max(dec.identity_residual().abs());
        }
    }
    report(
        1,
        "kl + entropy + quality_term = 0",
        worst <= 1e-9,
        &format!("max |residual| = {worst:.3e} over 3000 evaluations"),
    );
}

#[test]
fn criterion_02_quality_only_gradient_identity() {
    let mut rng = stream_rng(102, "c2");
    let mut ok = true;
    for case in 0..1000 {
        let n = rng.gen_range(3..=6);
        let inst = random_binary_instance(&mut rng, &format!("c2-{case}"), n);
        let dist = random_distribution(&mut rng, &inst);
        let pg = policy_gradient_objective(&dist, &inst).unwrap();
        let q = quality_mass(&dist, &inst).unwrap();
        ok &= pg == q;
    }
    report(
        2,
        "policy gradient == quality mass on 0/1 rewards",
        ok,
        "exact equality over 1000 random cases",
    );
}

/// The 50 instances (with their anchor temperatures) shared by the two
/// brute-force certification criteria.
fn certification_instances() -> Vec<(qempo::instance::AlignmentInstance, f64)> {
    let mut rng = stream_rng(103, "certification");
    (0..50)
        .map(|case| {
            let n = rng.gen_range(2..=4);
            let inst = random_instance(&mut rng, &format!("cert-{case}"), n);
            let beta = rng.gen_range(0.5..2.0);
            (inst, beta)
        })
        .collect()
}

#[test]
fn criterion_03_kl_minimization_certified() {
    let h = 0.01;
    let mut worst_gap_ratio: f64 = 0.0;
    let mut kkt_ok = true;
    for (inst, beta) in certification_instances() {
        let n = inst.len();
        let levels = constraint_levels(&inst, beta).unwrap();
        let anchor = rlhf_optimal(&inst, beta).unwrap();
        let grid = SimplexGrid::new(n, h).unwrap();
        let opt = brute_force_min_kl(&inst, levels.reward_floor, &grid).unwrap();
        assert!(opt.best.is_some(), "feasible set must contain grid points");
        let log_ratio = anchor
            .dist
            .probs
            .iter()
            .zip(inst.ref_probs())
            .map(|(&p, q)| (p / q).ln().abs())
            .fold(0.0, f64::max);
        let gap_bound = kl_grid_gap(n, h, log_ratio);
        let gap = (opt.value - anchor.kl_to_ref.unwrap()).abs();
        worst_gap_ratio = worst_gap_ratio.max(gap / gap_bound);
        let kkt = verify_kkt(
            &inst,
            &anchor.dist,
            &ConstraintSpec {
                reward_floor: levels.reward_floor,
                kl_budget: None,
            },
            &KktProgram::KlMin { lambda: 1.0 / beta },
            1e-8,
        )
        .unwrap();
        kkt_ok &= kkt.passed();
    }
    report(
        3,
        "KL-minimization matches brute force + KKT at 1e-8",
        worst_gap_ratio <= 1.0 && kkt_ok,
        &format!("worst gap / bound = {worst_gap_ratio:.3}, KKT all pass: {kkt_ok}"),
    );
}

#[test]
fn criterion_04_entropy_maximization_certified() {
    let h = 0.01;
    let mut worst_floor_ratio: f64 = 0.0;
    let mut worst_budget_ratio: f64 = 0.0;
    for (inst, beta) in certification_instances() {
        let n = inst.len();
        let levels = constraint_levels(&inst, beta).unwrap();
        let grid = SimplexGrid::new(n, h).unwrap();
        let gap_bound = entropy_grid_gap(n, h);

        // floor-only program
        let solve = solve_qempo_multiplier(&inst, levels.reward_floor, 1e-10).unwrap();
        let opt = brute_force_max_entropy(&inst, levels.reward_floor, None, &grid).unwrap();
        assert!(opt.best.is_some());
        let gap = (opt.value - entropy(&solve.dist)).abs();
        worst_floor_ratio = worst_floor_ratio.max(gap / gap_bound);

        // floor plus an interior KL budget
        let anchor = rlhf_optimal(&inst, beta).unwrap();
        let log_ratio = anchor
            .dist
            .probs
            .iter()
            .zip(inst.ref_probs())
            .map(|(&p, q)| (p / q).ln().abs())
            .fold(0.0, f64::max);
        let budget = interior_kl_budget(&inst, beta, 1e-10, kl_grid_gap(n, h, log_ratio)).unwrap();
        let spec = ConstraintSpec {
            reward_floor: levels.reward_floor,
            kl_budget: Some(budget),
        };
        let solve = solve_qempo_kl_multipliers(&inst, &spec, 1e-10, DEFAULT_MAX_ITERS).unwrap();
        let opt = brute_force_max_entropy(&inst, levels.reward_floor, Some(budget), &grid).unwrap();
        assert!(opt.best.is_some(), "interior budget must admit grid points");
        let gap = (opt.value - entropy(&solve.dist)).abs();
        worst_budget_ratio = worst_budget_ratio.max(gap / gap_bound);
    }
    report(
        4,
        "entropy maximization matches brute force at solved multipliers",
        worst_floor_ratio <= 1.0 && worst_budget_ratio <= 1.0,
        &format!(
            "worst gap / bound: floor-only {worst_floor_ratio:.3}, with budget {worst_budget_ratio:.3}"
        ),
    );
}

#[test]
fn criterion_05_tempered_entropy_monotone() {
    let mut rng = stream_rng(105, "c5");
    let mut mono_ok = true;
    let mut deriv_ok = true;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=8);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let s1 = rng.gen_range(0.01..2.0);
        let s2 = s1 + rng.gen_range(0.01..3.0);
        let ent = |s: f64| {
            let p = tempered_softmax(&z, s).unwrap();
            entropy(&PolicyDistribution::new("z", p).unwrap())
        };
        mono_ok &= ent(s2) <= ent(s1) + 1e-12;

        let analytic = tempered_entropy_derivative(&z, s1).unwrap();
        let step = 1e-6;
        let numeric = (ent(s1 + step) - ent(s1 - step)) / (2.0 * step);
        deriv_ok &= (analytic - numeric).abs() <= 1e-5 * numeric.abs().max(1e-8);
    }
    let constant_zero = tempered_entropy_derivative(&[1.5; 4], 0.7).unwrap() == 0.0;
    report(
        5,
        "tempered-softmax entropy monotone, derivative = -s*Var",
        mono_ok && deriv_ok && constant_zero,
        "1000 random (z, s1 < s2) cases + finite differences + constant case",
    );
}

#[test]
fn criterion_06_kl_budget_entropy_ordering() {
    let mut rng = stream_rng(106, "c6");
    let mut min_margin = f64::INFINITY;
    for case in 0..1000 {
        let n = rng.gen_range(3..=6);
        let inst = random_instance(&mut rng, &format!("c6-{case}"), n);
        for beta in [0.1, 1.0, 10.0] {
            let anchor = rlhf_optimal(&inst, beta).unwrap();
            for lambda2 in [0.1, 1.0, 10.0] {
                let lambda1 = lambda2 / beta;
                let kl_form = qempo_kl_optimal(&inst, lambda1, lambda2).unwrap();
                min_margin = min_margin.min(kl_form.entropy - anchor.entropy);
            }
        }
    }
    report(
        6,
        "KL-budget policy at matched ratio is at least as diverse as RLHF",
        min_margin >= -1e-9,
        &format!("min entropy margin {min_margin:.3e} over 9000 combinations"),
    );
}

#[test]
fn criterion_07_reward_floor_entropy_ordering() {
    let mut rng = stream_rng(107, "c7");
    let mut min_margin = f64::INFINITY;
    for case in 0..1000 {
        let n = rng.gen_range(3..=6);
        let inst = random_instance(&mut rng, &format!("c7-{case}"), n);
        // multipliers drawn inside the declared small-coupling regime:
        // lambda <= lambda1 / (lambda2 + 1) and (lambda2/lambda1) lambda <= 0.01,
        // reference entries at least 0.05 (by construction of the generator)
        let lambda2 = 10f64.powf(rng.gen_range(-1.0..1.0));
        let lambda1 = lambda2 * 10f64.powf(rng.gen_range(-1.0..3.0));
        let cap = (lambda1 / (lambda2 + 1.0)).min(0.01 * lambda1 / lambda2);
        let lambda = rng.gen_range(1e-6..1.0) * cap;
        let floor_only = qempo_optimal(&inst, lambda).unwrap();
        let with_budget = qempo_kl_optimal(&inst, lambda1, lambda2).unwrap();
        min_margin = min_margin.min(floor_only.entropy - with_budget.entropy);
    }
    report(
        7,
        "dropping the KL budget never loses entropy in the regime",
        min_margin >= -1e-6,
        &format!("min entropy margin {min_margin:.3e} over 1000 draws"),
    );
}

#[test]
fn criterion_08_implied_reward_round_trips() {
    let mut rng = stream_rng(108, "c8");
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.gen_range(3..=6);
        let inst = random_instance(&mut rng, &format!("c8-{case}"), n);
        let param_sets = [
            MethodParams::Rlhf {
                beta: rng.gen_range(0.2..5.0),
            },
            MethodParams::Qempo {
                lambda: rng.gen_range(0.2..5.0),
            },
            MethodParams::QempoKl {
                lambda1: rng.gen_range(0.2..5.0),
                lambda2: rng.gen_range(0.1..4.0),
            },
        ];
        for params in param_sets {
            let cf = closed_form_policy(&inst, &params).unwrap();
            let implied = implied_reward(&cf.dist, &inst, &params).unwrap();
            let centered = mean_center(&implied);
            let target = mean_center(&inst.rewards());
            for (a, b) in centered.iter().zip(&target) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    report(
        8,
        "mean-centered implied rewards recover the true rewards",
        worst <= 1e-9,
        &format!("max deviation {worst:.3e} over 1000 cases x 3 methods"),
    );
}

#[test]
fn criterion_09_gradient_checks() {
    let mut rng = stream_rng(109, "c9");
    let mut worst_rel: f64 = 0.0;

    // offline losses
    for case in 0..100 {
        let n = rng.gen_range(3..=6);
        let inst = random_instance(&mut rng, &format!("c9-{case}"), n);
        let suite = ScenarioSuite::new(0, vec![inst.clone()]).unwrap();
        let policy = random_policy(&mut rng, &suite);
        let pairs = sample_preferences(&inst, 12, &mut rng).unwrap();
        for method in [
            OfflineMethod::Dpo,
            OfflineMethod::Qempo,
            OfflineMethod::QempoKl,
        ] {
            let config = OfflineConfig {
                method,
                beta: rng.gen_range(0.1..1.0),
                inv_lambda: rng.gen_range(0.1..1.0),
                inv_lambda1: rng.gen_range(0.1..1.0),
                ratio21: rng.gen_range(0.0..0.5),
                learning_rate: 1.0,
                steps: 0,
                batch_size: 16,
                seed: 0,
                pairs_per_instance: 16,
                holdout_fraction: 0.0,
                eval_interval: 1,
            };
            let grad = offline_gradient(&config, &policy, &suite, &pairs).unwrap();
            let base = policy.logits_for(&inst.id).unwrap().clone();
            let f = |theta: &[f64]| {
                let mut probe = policy.clone();
                probe.logits.insert(inst.id.clone(), theta.to_vec());
                match method {
                    OfflineMethod::Dpo => dpo_loss(&probe, &suite, &pairs, config.beta).unwrap(),
                    OfflineMethod::Qempo => {
                        qempo_offline_loss(&probe, &pairs, config.inv_lambda).unwrap()
                    }
                    OfflineMethod::QempoKl => qempo_kl_offline_loss(
                        &probe,
                        &suite,
                        &pairs,
                        config.inv_lambda1,
                        config.ratio21,
                    )
                    .unwrap(),
                }
            };
            let numeric = finite_diff_gradient(f, &base, 1e-6).unwrap();
            for (a, b) in grad[&inst.id].iter().zip(&numeric) {
                // rtol 1e-5 with a 1e-8 atol floor for components at zero, where
                // central differences bottom out in rounding noise
                worst_rel = worst_rel.max(((a - b).abs() - 1e-8).max(0.0) / b.abs().max(1e-8));
            }
        }
    }

    // online losses: the trainer's analytic gradient against finite
    // differences of the loss through the softmax chain
    for _ in 0..100 {
        let n = rng.gen_range(3..=6);
        let group = random_group(&mut rng, n, 8);
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let inv_lambda = rng.gen_range(0.1..1.0);
        let (inv_lambda1, ratio21) = (rng.gen_range(0.1..1.0), rng.gen_range(0.0..0.5));
        for method in [OnlineMethod::Qempo, OnlineMethod::QempoKl] {
            let config = OnlineConfig {
                method,
                group_size: 8,
                inv_lambda,
                inv_lambda1,
                ratio21,
                beta: 0.3,
                learning_rate: 0.1,
                steps: 0,
                seed: 0,
                variance_gate: VarianceGate::Always,
                loss_variant: Default::default(),
                advantage_std_normalize: false,
                eval_interval: 1,
                eval_samples: 10,
                pass_k_values: vec![1],
            };
            let f = |theta: &[f64]| {
                let lp = qempo::measures::log_softmax(theta).unwrap();
                let mut probe = group.clone();
                probe.log_probs = probe.indices.iter().map(|&i| lp[i]).collect();
                match method {
                    OnlineMethod::Qempo => {
                        qempo_online_loss(&probe, inv_lambda, VarianceGate::Always).unwrap()
                    }
                    _ => qempo_kl_online_loss(&probe, inv_lambda1, ratio21, VarianceGate::Always)
                        .unwrap(),
                }
            };
            let numeric = finite_diff_gradient(f, &logits, 1e-6).unwrap();
            let lp = qempo::measures::log_softmax(&logits).unwrap();
            let probs = qempo::measures::softmax_from_logits(&logits).unwrap();
            let analytic = group_loss_gradient(&group, &config, &lp, &probs);
            for (a, b) in analytic.iter().zip(&numeric) {
                // rtol 1e-5 with a 1e-8 atol floor for components at zero, where
                // central differences bottom out in rounding noise
                worst_rel = worst_rel.max(((a - b).abs() - 1e-8).max(0.0) / b.abs().max(1e-8));
            }
        }
    }

    report(
        9,
        "analytic gradients match finite differences",
        worst_rel <= 1e-5,
        &format!("worst relative deviation {worst_rel:.3e} over 100 policies per loss"),
    );
}

#[test]
fn criterion_10_online_mse_identity() {
    let mut rng = stream_rng(110, "c10");
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(3..=8);
        let group_size = rng.gen_range(2..=12);
        let mut group = random_group(&mut rng, n, group_size);
        // arbitrary real rewards: the identity is algebraic
        for r in &mut group.rewards {
            *r = rng.gen_range(0.0..1.0);
        }
        let inv_lambda1 = rng.gen_range(0.1..2.0);
        let ratio21 = rng.gen_range(0.0..1.0);

        let loss =
            qempo_kl_online_loss(&group, inv_lambda1, ratio21, VarianceGate::Always).unwrap();
        let offset = mse_identity_offset(&group, inv_lambda1, ratio21);
        let mse = centered_implied_reward_mse(&group, &group.log_probs, inv_lambda1, ratio21);
        worst = worst.max((loss + offset - mse).abs());

        let loss = qempo_online_loss(&group, inv_lambda1, VarianceGate::Always).unwrap();
        let offset = mse_identity_offset(&group, inv_lambda1, 0.0);
        let mse = centered_implied_reward_mse(&group, &group.log_probs, inv_lambda1, 0.0);
        worst = worst.max((loss + offset - mse).abs());
    }
    report(
        10,
        "online losses equal the centered implied-reward MSE",
        worst <= 1e-10,
        &format!("max |loss + offset - mse| = {worst:.3e} over 1000 groups"),
    );
}

#[test]
fn criterion_11_multiplier_inversion() {
    let inst = parse_scenario(
        r#"{ "seed": 0, "instances": [ { "id": "coin", "candidates": [
            { "reward": 1.0, "quality": "positive", "ref_prob": 0.5 },
            { "reward": 0.0, "quality": "negative", "ref_prob": 0.5 } ] } ] }"#,
    )
    .unwrap()
    .instances
    .remove(0);

    let mut worst: f64 = 0.0;
    for lambda_star in [0.5f64, 1.0, 2.0, 5.0] {
        let floor = 1.0 / (1.0 + (-lambda_star).exp());
        let solve = solve_qempo_multiplier(&inst, floor, 1e-12).unwrap();
        assert_eq!(solve.status, ConstraintStatus::Binding);
        worst = worst.max((solve.lambda - lambda_star).abs());
    }
    let slack = solve_qempo_multiplier(&inst, 0.4, 1e-10).unwrap();
    let infeasible = solve_qempo_multiplier(&inst, 1.5, 1e-10).unwrap();
    let ok = worst <= 1e-6
        && slack.status == ConstraintStatus::Slack
        && slack.lambda == 0.0
        && infeasible.status == ConstraintStatus::Infeasible;
    report(
        11,
        "bisection inverts the multiplier; boundary statuses correct",
        ok,
        &format!("max |lambda - lambda*| = {worst:.3e}"),
    );
}

#[test]
fn criterion_12_offline_entropy_separation() {
    let suite = parse_scenario(BUNDLED_OFFLINE_SUITE).unwrap();
    let qempo_config: OfflineConfig =
        serde_json::from_str(include_str!("../data/offline_qempo.json")).unwrap();
    let dpo_config: OfflineConfig =
        serde_json::from_str(include_str!("../data/offline_dpo.json")).unwrap();

    let summarize = |policy: &LogitPolicy| {
        let mut h = 0.0;
        let mut q = 0.0;
        for inst in &suite.instances {
            let dist = policy.distribution(&inst.id).unwrap();
            h += entropy(&dist);
            q += quality_mass(&dist, inst).unwrap();
        }
        let n = suite.instances.len() as f64;
        (h / n, q / n)
    };

    let qempo = train_offline(&suite, &qempo_config).unwrap();
    let dpo = train_offline(&suite, &dpo_config).unwrap();
    let (h_qempo, q_qempo) = summarize(&qempo.policy);
    let (h_dpo, q_dpo) = summarize(&dpo.policy);

    let ok = q_qempo >= 0.9 && q_dpo >= 0.9 && h_qempo > h_dpo;
    report(
        12,
        "offline QEMPO ends more diverse than DPO at matched quality",
        ok,
        &format!("entropy {h_qempo:.4} vs {h_dpo:.4}, quality mass {q_qempo:.4} vs {q_dpo:.4}"),
    );
}

#[test]
fn criterion_13_online_pass_at_k_parity() {
    let suite = parse_scenario(BUNDLED_ONLINE_SUITE).unwrap();
    let qempo_config: OnlineConfig =
        serde_json::from_str(include_str!("../data/online_qempo.json")).unwrap();
    let grpo_config: OnlineConfig =
        serde_json::from_str(include_str!("../data/online_grpo.json")).unwrap();
    assert_eq!(qempo_config.variance_gate, VarianceGate::AllCorrect);

    let qempo = train_online(&suite, &qempo_config).unwrap();
    let grpo = train_online(&suite, &grpo_config).unwrap();
    let last_q = qempo.history.last().unwrap();
    let last_g = grpo.history.last().unwrap();
    // pass_k_values = [1, 4, 8, 16]
    let (p1_q, p8_q) = (last_q.pass_at_k[0], last_q.pass_at_k[2]);
    let (p1_g, p8_g) = (last_g.pass_at_k[0], last_g.pass_at_k[2]);

    let ok = p1_q >= p1_g - 0.02 && p8_q >= p8_g;
    report(
        13,
        "online QEMPO keeps pass@k parity with the GRPO baseline",
        ok,
        &format!("pass@1 {p1_q:.3} vs {p1_g:.3}; pass@8 {p8_q:.4} vs {p8_g:.4}"),
    );
}

#[test]
fn criterion_14_byte_identical_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario_offline = tmp.path().join("offline_suite.json");
    std::fs::write(&scenario_offline, BUNDLED_OFFLINE_SUITE).unwrap();
    let scenario_online = tmp.path().join("online_suite.json");
    std::fs::write(&scenario_online, BUNDLED_ONLINE_SUITE).unwrap();
    let offline_cfg = tmp.path().join("offline.json");
    std::fs::write(&offline_cfg, include_str!("../data/offline_qempo.json")).unwrap();
    let online_cfg = tmp.path().join("online.json");
    std::fs::write(&online_cfg, include_str!("../data/online_qempo.json")).unwrap();

    let run_to = |out: &std::path::Path, args: &[String]| {
        let cli = Cli::try_parse_from(args).unwrap();
        let code = run(cli);
        assert_eq!(code, 0, "command failed: {args:?}");
        std::fs::read(out.join("history.csv")).unwrap()
    };

    let mut ok = true;
    for (cfg, scenario, tag) in [
        (&offline_cfg, &scenario_offline, "train-offline"),
        (&online_cfg, &scenario_online, "train-online"),
    ] {
        let out_a = tmp.path().join(format!("{tag}-a"));
        let out_b = tmp.path().join(format!("{tag}-b"));
        let args_for = |out: &std::path::Path| {
            vec![
                "qempo".to_string(),
                "--out-dir".into(),
                out.display().to_string(),
                tag.to_string(),
                "--scenario".into(),
                scenario.display().to_string(),
                "--config".into(),
                cfg.display().to_string(),
            ]
        };
        let a = run_to(&out_a, &args_for(&out_a));
        let b = run_to(&out_b, &args_for(&out_b));
        ok &= a == b;
        ok &= !a.is_empty();
    }

    // frontier CSV as well
    let front_a = tmp.path().join("front-a");
    let front_b = tmp.path().join("front-b");
    let front_args = |out: &std::path::Path| {
        vec![
            "qempo".to_string(),
            "--out-dir".into(),
            out.display().to_string(),
            "frontier".to_string(),
            "--scenario".into(),
            scenario_offline.display().to_string(),
            "--method".into(),
            "qempo".into(),
            "--preset".into(),
            "inv-lambda-default".into(),
        ]
    };
    for (out, args) in [
        (&front_a, front_args(&front_a)),
        (&front_b, front_args(&front_b)),
    ] {
        let cli = Cli::try_parse_from(&args).unwrap();
        assert_eq!(run(cli), 0);
        let _ = out;
    }
    ok &= std::fs::read(front_a.join("frontier.csv")).unwrap()
        == std::fs::read(front_b.join("frontier.csv")).unwrap();

    report(
        14,
        "same-seed reruns emit byte-identical CSVs",
        ok,
        "train-offline, train-online, frontier",
    );
}

#[test]
fn pass_at_k_reference_values() {
    // spot checks used across the suite
    assert!(
        (pass_at_k(PassAtKInput {
            samples: 4,
            correct: 2,
            k: 2
        })
        .unwrap()
            - (1.0 - 1.0 / 6.0))
            .abs()
            < 1e-12
    );
}
