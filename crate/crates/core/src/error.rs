use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the map, mask and metric operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("pixel ({row}, {col}) is outside a {width}x{height} map")]
    OutOfBounds {
        row: usize,
        col: usize,
        width: usize,
        height: usize,
    },
    #[error("empty region")]
    EmptyRegion,
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("undefined metric: {0}")]
    Undefined(String),
    #[error("generation failed: {0}")]
    Generation(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised while decoding or encoding one of the file formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("at byte {offset}: {message}")]
    Binary { offset: usize, message: String },
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("invalid document: {0}")]
    Json(String),
    #[error("mask {id}: {message}")]
    Mask { id: i64, message: String },
    #[error("pixel ({row}, {col}) has value {value}; expected 0, 128 or 255")]
    PgmValue { row: usize, col: usize, value: u8 },
    #[error("{0}")]
    Invalid(String),
}

impl FormatError {
    pub(crate) fn binary(offset: usize, message: impl Into<String>) -> Self {
        FormatError::Binary {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for FormatError {
    fn from(e: serde_json::Error) -> Self {
        FormatError::Json(e.to_string())
    }
}
