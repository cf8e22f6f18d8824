//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TripdError {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("matrix is not symmetric: max |m - m^T| entry {deviation:.3e} exceeds tolerance")]
    NotSymmetric { deviation: f64 },

    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: &'static str },

    #[error(
        "stepsize condition violated: smallest curvature {curvature:.6e} along witness direction"
    )]
    StepsizeViolated { curvature: f64 },

    #[error(
        "power iteration did not converge after {iters} iterations (best estimate {best:.12e})"
    )]
    PowerIterationNoConvergence { best: f64, iters: usize },

    #[error("proximal oracle failure at iteration {iter}: {message}")]
    ProxFailure { iter: u64, message: String },

    #[error("iterate diverged at iteration {iter} (norm {norm:.3e})")]
    Diverged { iter: u64, norm: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("inner solver failure at outer iteration {iter}: {message}")]
    InnerSolverFailure { iter: u64, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TripdError>;
