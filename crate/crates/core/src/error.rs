use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = TvfError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TvfError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("trajectory too short: {required} frames required, {provided} provided")]
    TrajectoryTooShort { required: usize, provided: usize },

    #[error("frequency {freq} Hz outside (0, {nyquist}) Hz")]
    FrequencyOutOfRange { freq: f64, nyquist: f64 },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: String, index: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("unknown {kind} '{name}' (known: {known})")]
    UnknownName {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("tape has already been replayed")]
    TapeReplayed,

    #[error("unsupported audio: {0}")]
    UnsupportedAudio(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TvfError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TvfError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn non_finite(what: impl Into<String>, index: usize) -> Self {
        TvfError::NonFinite {
            what: what.into(),
            index,
        }
    }

    /// True for failures caused by NaN/inf arithmetic rather than bad input data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, TvfError::NonFinite { .. })
    }
}

/// Returns the index of the first non-finite element, if any.
pub(crate) fn first_non_finite(values: &[f64]) -> Option<usize> {
    values.iter().position(|v| !v.is_finite())
}
