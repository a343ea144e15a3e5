use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be at least {min}, got {got}")]
    DimensionTooSmall { min: usize, got: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not symmetric: |A - A'| = {max_asym:.3e} at ({row}, {col})")]
    NotSymmetric {
        row: usize,
        col: usize,
        max_asym: f64,
    },

    #[error("matrix is not positive definite: smallest eigenvalue {eigenvalue:.6e}")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("degenerate regression design: {detail}")]
    DegenerateDesign { detail: String },

    #[error("invalid parameter: {detail}")]
    InvalidParameter { detail: String },

    #[error("scale lambda must be positive, got {0}")]
    NonPositiveLambda(f64),

    #[error("moment does not exist: {detail}")]
    MomentUndefined { detail: String },

    #[error("invalid config: {detail}")]
    InvalidConfig { detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
