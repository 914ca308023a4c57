use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The marginal density is infinite at the requested point (n ≤ 2 at ±√n).
    #[error("unbounded density for n = {n} at t = {t}")]
    UnboundedDensity { n: usize, t: f64 },

    /// Lattice enumeration would exceed the configured point cap.
    #[error("lattice enumeration refused: estimated {estimate:.3e} points exceeds cap {cap}")]
    EnumerationCap { estimate: f64, cap: u64 },

    /// An internal invariant failed (for example N' > N).
    #[error("internal consistency error: {0}")]
    Inconsistent(String),

    /// Missing or contradictory configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The operation is not meaningful for this input (e.g. quantile bands on a
    /// column-truncated matrix).
    #[error("refused: {0}")]
    Refused(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
