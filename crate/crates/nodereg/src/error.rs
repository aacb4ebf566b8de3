//! Crate-wide error type.

/// Errors produced by numerics, integration, training and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A non-finite value (NaN or Inf) appeared where finiteness is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Two-body radius fell below the collision guard.
    #[error("two-body singularity: r = {r:.3e} < 1e-12")]
    Singularity { r: f64 },

    /// Consecutive trajectory states too close for a finite-difference direction.
    #[error("degenerate state pair: ||x1 - x0|| = {norm:.3e} < 1e-14")]
    DegeneratePair { norm: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    /// Integration or gradient evaluation blew up at a known step.
    #[error("numeric failure at step {step}: {context}")]
    NumericFailure { step: usize, context: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
