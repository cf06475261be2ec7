//! Error types shared across the library.

use thiserror::Error;

/// Errors produced by the numerical routines and learners.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (jitter escalation exhausted)")]
    NotPositiveDefinite,

    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid range: [{a}, {b}]")]
    InvalidRange { a: f64, b: f64 },

    #[error("parameter outside the validity window: {0}")]
    OutOfValidityWindow(String),

    #[error("importance-sampling effective sample size too low: {ess:.1} < {min:.1}")]
    EffectiveSampleSizeTooLow { ess: f64, min: f64 },

    #[error("divergence detected: {0}")]
    DivergenceDetected(String),

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
