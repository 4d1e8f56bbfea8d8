use thiserror::Error;

/// Errors raised by the estimation, covariance, simulation and evaluation layers.
#[derive(Debug, Error)]
pub enum GpcaError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric: max asymmetry {asymmetry:e} exceeds tolerance {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive definite: smallest eigenvalue {min_eigenvalue:e}")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("rank deficient input: column {column} has residual norm {norm:e} after elimination")]
    RankDeficient { column: usize, norm: f64 },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid sample covariance: diagonal entry {index} is {value:e} (must be > 0)")]
    InvalidSampleCovariance { index: usize, value: f64 },

    #[error("insufficient data: need at least {needed} time points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("inconsistent panel shape: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GpcaError>;
