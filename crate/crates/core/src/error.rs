use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({x}, {y}, {z}) lies outside the domain")]
    OutOfDomain { x: f64, y: f64, z: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("matrix is singular (pivot {pivot:e} at step {step}); consider TSVD regularization")]
    Singular { step: usize, pivot: f64 },

    #[error("search direction is invisible to the sensors (zero step denominator)")]
    Stagnation,

    #[error("reference flux vanishes on face {face}; relative error undefined")]
    ZeroReference { face: usize },

    #[error("artifact integrity check failed: {0}")]
    Integrity(String),

    #[error("unsupported artifact format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotSpd(_) | Error::NoConvergence { .. } | Error::Singular { .. } | Error::Stagnation
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
