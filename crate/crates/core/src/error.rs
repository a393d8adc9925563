//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the estimation, synthesis and planning layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{what} is not positive semidefinite (min eigenvalue {min_eig:e})")]
    InvalidCovariance { what: String, min_eig: f64 },

    #[error("regressor Gram matrix is rank deficient (min/max eigenvalue ratio {ratio:e}); insufficient excitation")]
    RankDeficient { ratio: f64 },

    #[error("invalid epoch schedule: {0}")]
    InvalidSchedule(String),

    #[error("malformed conic program: {0}")]
    MalformedProgram(String),

    #[error("no robustly stabilizing policy exists for the model (uncertainty region too large)")]
    NoRobustlyStabilizingPolicy,

    #[error("policy is not robustly stabilizing over the model's uncertainty region")]
    PolicyNotRobustlyStabilizing,

    #[error("SDP solve ran into numerical trouble: {0}")]
    NumericalTrouble(String),

    #[error("Riccati iteration did not converge; system may not be stabilizable")]
    NotStabilizable,

    #[error("multiplier selection failed at epoch {epoch}: {source}")]
    MultiplierSelectionFailed {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("dataset parse error at line {line}: {message}")]
    DatasetParse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
