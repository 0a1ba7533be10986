//! Error type shared across the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;

/// Errors produced by the pipeline, grouped by how a caller should react.
///
/// The CLI maps these onto stable exit codes: configuration and usage
/// problems exit 2, numerical failures exit 3, I/O failures exit 4.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    /// A record line could not be parsed (bad number, bad field).
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    /// A record line has the wrong shape (field count).
    #[error("structural error at line {line}: expected {expected} fields, found {found}")]
    Structure {
        line: usize,
        expected: usize,
        found: usize,
    },

    /// Invalid configuration or arguments.
    #[error("config error: {0}")]
    Config(String),

    /// Tensor dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// Training or evaluation produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Filesystem failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A persisted artifact is malformed or has an unexpected version.
    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },
}

impl CoreError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        CoreError::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    pub fn config(detail: impl Into<String>) -> Self {
        CoreError::Config(detail.into())
    }

    pub fn shape(detail: impl Into<String>) -> Self {
        CoreError::Shape(detail.into())
    }
}
