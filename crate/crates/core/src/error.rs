use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("flow {0} is not registered")]
    UnknownFlow(u32),
    #[error("cannot read {path}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { field: field.into(), reason: reason.into() }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("packet {packet_id} delivered at {time}s without a matching generation record")]
    OrphanDelivery { packet_id: u64, time: String },
    #[error("packet {0} delivered more than once")]
    DuplicateDelivery(u64),
    #[error("record is missing `{0}`")]
    MissingField(&'static str),
}

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("scenario fingerprints differ ({baseline} vs {improved})")]
    FingerprintMismatch { baseline: String, improved: String },
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Errors surfaced by the run orchestration layer.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Compare(#[from] CompareError),
    #[error(transparent)]
    Io(#[from] IoError),
}
