use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance matrix is not positive definite even with nugget {nugget:e}")]
    SingularCovariance { nugget: f64 },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error("integration produced a non-finite state at t = {time} s")]
    NonFiniteState { time: f64 },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("reference solution unavailable: {0}")]
    ReferenceUnavailable(String),

    #[error("malformed csv at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
