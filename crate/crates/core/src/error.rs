use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed model: dimension mismatch, non-symmetric matrix, bad parameters.
    #[error("model error: {0}")]
    Model(String),

    /// Barrier evaluated below zero on a state inside the declared domain.
    #[error("barrier is negative ({value:e}) at state {witness:?}")]
    NegativeBarrier { value: f64, witness: Vec<f64> },

    #[error("invalid barrier: {0}")]
    Barrier(String),

    #[error("unsupported region: {0}")]
    UnsupportedRegion(String),

    /// Exact tree requested past the configured horizon cap.
    #[error("horizon {k} exceeds the exact-tree limit {k_max}; use a closed form or Monte Carlo")]
    Horizon { k: usize, k_max: usize },

    #[error("functional set grew past {cap} entries")]
    FunctionalCap { cap: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Certificate value decreased along a threshold-search ray.
    #[error("certificate value is not monotone along the ray: f({t1}) = {f1} > f({t2}) = {f2}")]
    NonMonotone { t1: f64, f1: f64, t2: f64, f2: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("mismatched problem identity: {left} vs {right}")]
    ProblemMismatch { left: String, right: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }
}
