use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error(
        "forward Euler stability guard violated: dt * (p_bar + |k|) = {product:.6} > 0.5"
    )]
    StabilityGuard { product: f64 },

    #[error("actuation vector is not stabilizable: its components sum to zero")]
    NotStabilizable,

    #[error("state became non-finite at t = {time}")]
    NonFinite { time: f64 },

    #[error("blow-up at step {step} (t = {time}): {summary}")]
    BlowUp {
        step: usize,
        time: f64,
        summary: String,
    },

    #[error("eigenpair {index} failed verification: residual {residual:e} exceeds {tolerance:e}")]
    SpectralVerification {
        index: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("config {location}: {message}")]
    Config { location: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 1 validation, 2 runtime blow-up, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } | Error::BlowUp { .. } | Error::SpectralVerification { .. } => 2,
            Error::Io { .. } | Error::Json(_) => 3,
            _ => 1,
        }
    }
}
