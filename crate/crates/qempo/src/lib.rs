//! Desk-scale laboratory for quality-constrained entropy-maximization
//! policy optimization over finite candidate spaces.
//!
//! Candidate sets are small and fully enumerable, so every optimality,
//! ordering, and gradient claim made by the analytical machinery can be
//! certified against brute force. The crate provides:
//!
//! * [`instance`] — alignment instances, explicit and logit policies,
//!   scenario suites;
//! * [`measures`] — stable softmax, entropy, KL, expected reward, quality
//!   mass, and the quality/diversity decomposition of the alignment
//!   objective;
//! * [`closed_form`] — the optimal policies of RLHF, QEMPO, and QEMPO-KL,
//!   the tempered softmax family, and implied-reward round trips;
//! * [`solver`] — constraint levels, bisection for the reward-floor
//!   multiplier, nested bisection for the (reward, KL) multiplier pair,
//!   and KKT verification;
//! * [`oracle`] — simplex-grid brute force and finite-difference gradients;
//! * [`offline`] — preference sampling and the DPO / QEMPO / QEMPO-KL
//!   offline losses with analytic gradients and a trainer;
//! * [`online`] — group sampling, GRPO advantages, the online losses with
//!   the quality-gated variance term, and a trainer;
//! * [`metrics`] — pass@k and entropy/quality frontier sweeps;
//! * [`scenario`] — the JSON scenario/policy/config file formats;
//! * [`cli`] — the `qempo` command-line front end.
//!
//! See the crate examples for end-to-end walkthroughs of each capability.

// Validation guards are written `!(x > 0.0)` on purpose: the negation is
// false for NaN, so non-finite garbage fails the precondition instead of
// slipping past an `x <= 0.0` rewrite.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod closed_form;
pub mod error;
pub mod instance;
pub mod measures;
pub mod metrics;
pub mod offline;
pub mod online;
pub mod oracle;
pub mod scenario;
pub mod seeding;
pub mod solver;

pub use error::{Error, Result};
pub use instance::{
    AlignmentInstance, CandidateOutcome, LogitPolicy, PolicyDistribution, Quality, ScenarioSuite,
};
