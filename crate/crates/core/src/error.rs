use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("diameter out of range: D = {0} must lie in (0, pi)")]
    DiameterOutOfRange(f64),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("integration failure near right endpoint (z = {z})")]
    IntegrationFailure { z: f64 },
    #[error("c search cap exceeded; raise cap (cap = {cap})")]
    CSearchCapExceeded { cap: f64 },
    #[error("bound violation: {0}")]
    BoundViolation(String),
    #[error("s too small for lambda-tilde bounds: s = {s}, threshold = {threshold}")]
    STooSmall { s: f64, threshold: f64 },
    #[error("s cap exceeded; modulus premise unverified at this resolution (s_max = {s_max})")]
    SCapExceeded { s_max: f64 },
    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
