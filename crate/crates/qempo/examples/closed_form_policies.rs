//! The three closed-form optimal policies side by side.
//!
//! Builds a small instance, evaluates the RLHF, QEMPO, and QEMPO-KL
//! policies, and shows two of their structural facts: with the multiplier
//! ratio matched to `1/beta` the QEMPO-KL policy is never less diverse
//! than RLHF, and each policy re-encodes its reward vector exactly (up to
//! the per-instance constant dropped with the partition function).
//!
//! Run with: `cargo run --example closed_form_policies`

use qempo::closed_form::{
    implied_reward, qempo_kl_optimal, qempo_optimal, rlhf_optimal, tempered_softmax, MethodParams,
};
use qempo::instance::{AlignmentInstance, CandidateOutcome, PolicyDistribution, Quality};
use qempo::measures::{entropy, mean_center};

fn main() -> qempo::Result<()> {
    let inst = AlignmentInstance::new(
        "essay-prompt",
        vec![
            CandidateOutcome {
                label: Some("thorough".into()),
                reward: 0.9,
                quality: Quality::Positive,
                ref_prob: 0.5,
            },
            CandidateOutcome {
                label: Some("terse".into()),
                reward: 0.7,
                quality: Quality::Positive,
                ref_prob: 0.3,
            },
            CandidateOutcome {
                label: Some("off-topic".into()),
                reward: 0.1,
                quality: Quality::Negative,
                ref_prob: 0.2,
            },
        ],
    )?;

    let beta = 0.5;
    let lambda2 = 1.0;
    let lambda1 = lambda2 / beta; // ratio matched to 1/beta
    let lambda = 2.0;

    let rlhf = rlhf_optimal(&inst, beta)?;
    let qempo = qempo_optimal(&inst, lambda)?;
    let qempo_kl = qempo_kl_optimal(&inst, lambda1, lambda2)?;

    println!("instance {:?}, rewards {:?}", inst.id, inst.rewards());
    println!("reference        {:?}", inst.ref_probs());
    for (name, cf) in [("rlhf", &rlhf), ("qempo", &qempo), ("qempo-kl", &qempo_kl)] {
        println!(
            "{name:<9} probs {:?}  entropy {:.4}  E[r] {:.4}  KL-to-ref {:.4}",
            cf.dist
                .probs
                .iter()
                .map(|p| (p * 1e4).round() / 1e4)
                .collect::<Vec<_>>(),
            cf.entropy,
            cf.expected_reward,
            cf.kl_to_ref.unwrap_or(f64::NAN),
        );
    }
    println!(
        "\nentropy ordering at matched ratio: qempo-kl {:.4} >= rlhf {:.4}",
        qempo_kl.entropy, rlhf.entropy
    );

    // implied rewards: each policy stores its reward vector up to a shift
    for (name, cf, params) in [
        ("rlhf", &rlhf, MethodParams::Rlhf { beta }),
        ("qempo", &qempo, MethodParams::Qempo { lambda }),
        (
            "qempo-kl",
            &qempo_kl,
            MethodParams::QempoKl { lambda1, lambda2 },
        ),
    ] {
        let implied = implied_reward(&cf.dist, &inst, &params)?;
        let centered = mean_center(&implied);
        let target = mean_center(&inst.rewards());
        let max_err = centered
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("{name:<9} implied-reward round trip, max deviation {max_err:.2e}");
    }

    // the tempered family behind the orderings: entropy falls as the
    // temperature multiplier rises
    println!("\ntempered softmax of the rewards:");
    for s in [0.5, 1.0, 2.0, 4.0] {
        let probs = tempered_softmax(&inst.rewards(), s)?;
        let h = entropy(&PolicyDistribution::new(inst.id.clone(), probs)?);
        println!("  s = {s:<4} entropy {h:.4}");
    }
    Ok(())
}
