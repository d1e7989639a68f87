use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// The dimensionless resistances sum to one or more, leaving no series
    /// resistance. The likelihood layer maps this to a log-density floor.
    #[error("degenerate parameters: sum of r_i = {sum_r} >= 1")]
    DegenerateParams { sum_r: f64 },

    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    #[error("covariance matrix is not positive definite")]
    NonPsdCovariance,

    #[error("Cholesky factorisation failed after jitter escalation (max jitter {max_jitter})")]
    CholeskyFailure { max_jitter: f64 },

    #[error("warp input below alpha floor: f = {f} < alpha = {alpha}")]
    NegativeRadicand { f: f64, alpha: f64 },

    #[error("degenerate importance weights: effective sample size {ess:.2}")]
    DegenerateWeights { ess: f64 },

    /// Warped targets left the representable range; expected for warp
    /// configurations lacking the scaling layer.
    #[error("warped targets overflowed the representable range")]
    Overflow,

    #[error("dataset has no generator metadata; true parameters unavailable")]
    MissingMetadata,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
