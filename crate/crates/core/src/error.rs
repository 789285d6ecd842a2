use std::path::PathBuf;

use thiserror::Error;

use crate::domain::MetricKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed delimited text in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("non-finite value {0} cannot be binned")]
    NonFinite(f64),

    #[error("unknown metric {0:?}")]
    UnknownMetric(String),

    #[error("unknown dimension {0:?}")]
    UnknownDimension(String),

    #[error("invalid value {value:?} for {field}")]
    InvalidValue { field: &'static str, value: String },

    #[error("trip {file_id}: timestamp gap of {gap_ms} ms after t={after_ms} ms (expected 100 ms)")]
    NonUniformTimestamps {
        file_id: String,
        after_ms: i64,
        gap_ms: i64,
    },

    #[error("trip {file_id}: invalid record at t={timestamp_ms} ms: {message}")]
    InvalidRecord {
        file_id: String,
        timestamp_ms: i64,
        message: String,
    },

    #[error("trip {0} is not listed in the trip index")]
    UnindexedTrip(String),

    #[error("cannot merge a {left} table with a {right} table")]
    MetricMismatch { left: MetricKind, right: MetricKind },

    #[error("invalid fleet configuration: {0}")]
    Config(String),

    #[error("invalid filter: {0}")]
    Filter(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
