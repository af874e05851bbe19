//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid cu_seqlens: {0}")]
    InvalidCuSeqlens(String),

    #[error("invalid keep mask: {0}")]
    InvalidMask(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unknown preset `{0}` (known: desk, deit_tiny, deit_small, deit_base)")]
    UnknownPreset(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("malformed data: {0}")]
    Malformed(String),

    #[error("csv parse error at line {line}, column {column}: {message}")]
    CsvParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
