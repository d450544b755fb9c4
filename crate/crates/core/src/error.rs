use std::path::PathBuf;

use thiserror::Error;

/// A row that could not be turned into a [`CallRecord`](crate::data::CallRecord).
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    /// Zero-based data row index (header excluded).
    pub row: usize,
    pub reason: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "row {}: {}", self.row, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("input contained no valid rows ({} malformed)", .malformed.len())]
    EmptyInput { malformed: Vec<RowError> },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("too few training points: need {needed}, have {available}")]
    TooFewPoints { needed: usize, available: usize },

    #[error("cholesky factorization failed (jitter {jitter:e})")]
    CholeskyFailure { jitter: f64 },

    #[error("optimizer diverged (objective {0:e})")]
    OptimizerDiverged(f64),

    #[error("lookback reaches into the test period at t = {time} h")]
    Leakage { time: f64 },

    #[error("event at (x={x}, y={y}, t={t}) lies outside the evaluated domain")]
    EventOutsideDomain { x: f64, y: f64, t: f64 },

    #[error("intensity is unbounded or exceeds its computed bound: {0}")]
    UnboundedIntensity(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 1,
            Error::Io { .. }
            | Error::EmptyInput { .. }
            | Error::Malformed(_)
            | Error::ShapeMismatch { .. }
            | Error::TooFewPoints { .. }
            | Error::Leakage { .. }
            | Error::EventOutsideDomain { .. }
            | Error::InsufficientHistory(_)
            | Error::Serialization(_) => 2,
            Error::NonFiniteInput(_)
            | Error::CholeskyFailure { .. }
            | Error::OptimizerDiverged(_)
            | Error::UnboundedIntensity(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
