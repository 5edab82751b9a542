use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("coercivity violated: {0}")]
    Coercivity(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("support error: {0}")]
    Support(String),
    #[error("cannot normalize: {0}")]
    Normalization(String),
    #[error("mountain-pass geometry error: {0}")]
    Geometry(String),
    #[error("condition (B) violated: {0}")]
    ConditionB(String),
    #[error("solver did not converge: {0}")]
    Nonconvergence(String),
    #[error("saddle lost: {0}")]
    SaddleLost(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("hypothesis failed: {0}")]
    Hypothesis(String),
    #[error("linear solver failed: {0}")]
    LinearSolve(String),
    #[error("field format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
