//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by estimation, simulation, and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter set is inconsistent or infeasible (bad dimensions,
    /// infeasible edge budgets, mismatched grids, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates a documented precondition (asymmetric covariance,
    /// nonpositive diagonal, shape mismatch, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A numeric operation failed (singular matrix, non-positive-definite
    /// input where positive definiteness is required, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed on-disk data (unknown columns, non-contiguous indices, ...).
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
