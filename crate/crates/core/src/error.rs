//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("singular matrix: {0}")]
    SingularMatrix(String),
    #[error("unsupported model format version: {0}")]
    UnsupportedVersion(String),
    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),
    #[error("missing entity: {0}")]
    MissingEntity(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
