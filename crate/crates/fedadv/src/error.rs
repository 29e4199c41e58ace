use thiserror::Error;

/// Crate-wide error type. Variants carry enough context to point at the
/// offending field, byte offset, or shape without needing a backtrace.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("dataset parse error at byte offset {offset}: {reason}")]
    Parse { offset: u64, reason: String },

    #[error("partition error: {0}")]
    Partition(String),

    #[error("federation error: {0}")]
    Fed(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("regression error: {0}")]
    Regression(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub fn shape(reason: impl Into<String>) -> Self {
        Error::ShapeMismatch(reason.into())
    }
}
