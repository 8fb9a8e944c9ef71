use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the classification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("no transient found in signal")]
    NoTransient,

    #[error("invalid range [{lo}, {hi}) for length {len}")]
    InvalidRange { lo: usize, hi: usize, len: usize },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("cannot reach {target_db} dB SNR from a {current_db:.3} dB signal by adding noise")]
    CannotDenoise { target_db: f64, current_db: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("signal too short: {len} samples, need at least {needed}")]
    SignalTooShort { len: usize, needed: usize },

    #[error("no frequency bins in band [{f_lo}, {f_hi}] Hz")]
    EmptyBand { f_lo: f64, f_hi: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("missing dataset cell: {0}")]
    MissingCell(String),

    #[error("bad container format: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
