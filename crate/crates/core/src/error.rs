use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("no bracket: {0}")]
    NoBracket(String),
    #[error("integration failure: {0}")]
    Integration(String),
    #[error("orbit escape: {0}")]
    OrbitEscape(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("non-contraction: {0}")]
    NonContraction(String),
    #[error("ball violation: {0}")]
    BallViolation(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("guard violation: {0}")]
    Guard(String),
    #[error("blow-up: {0}")]
    BlowUp(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
