use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("pole of the gamma function at x = {0}")]
    Pole(f64),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular weight: {0}")]
    Singularity(String),
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("pointwise impulse solve stalled: {0}")]
    PointwiseImpulse(String),
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("expression error: {0}")]
    Parse(String),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
