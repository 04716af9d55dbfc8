//! Crate-wide error type.

/// Errors shared by all modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A log or ratio was requested where the denominator distribution has
    /// zero mass but the numerator does not.
    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    /// A guard against intractable work was hit (e.g. simplex grids too fine
    /// or too high-dimensional to enumerate).
    #[error("resource limit: {0}")]
    ResourceLimit(String),

    /// An iterative solver ran out of iterations. Carries the last iterate
    /// and the constraint residuals at that iterate.
    #[error(
        "no convergence after {iterations} iterations: lambda1={lambda1:.6e}, \
         lambda2={lambda2:.6e}, reward residual={reward_residual:+.3e}, \
         kl residual={kl_residual:+.3e}"
    )]
    ConvergenceFailure {
        iterations: usize,
        lambda1: f64,
        lambda2: f64,
        reward_residual: f64,
        kl_residual: f64,
    },

    /// A callback produced a non-finite value.
    #[error("evaluation failure: {0}")]
    EvaluationFailure(String),

    /// Training produced a non-finite loss. Carries the step index.
    #[error("training failure at step {step}: {message}")]
    TrainingFailure { step: usize, message: String },

    /// A scenario, policy, or config file failed validation. The message
    /// carries the instance id and field path of the first violation.
    #[error("validation: {0}")]
    Validation(String),

    #[error("parse: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
