use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A rollout produced NaN or infinity.
    #[error("non-finite state or cost at stage {stage}")]
    NonFiniteCost { stage: usize },

    /// The reduced input Hessian of the LQR subproblem is not positive definite.
    #[error("Riccati factorization failed: R̄ not positive definite at stage {0}")]
    IndefiniteRbar(usize),

    #[error("dimension mismatch in {what}: expected {expected}, got {found}")]
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid cost: {0}")]
    InvalidCost(String),

    #[error("invalid solver parameter: {0}")]
    InvalidParams(String),

    /// The step size was halved more often than allowed.
    #[error("step size collapsed after {halvings} halvings")]
    StepSizeCollapse { halvings: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
