use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: file is not valid UTF-8")]
    InvalidUtf8 { path: PathBuf },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {what} {index} (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("category '{category}' has {available} documents, {required} required")]
    InsufficientDocuments {
        category: String,
        available: usize,
        required: usize,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("grid cell train_size={train_size} topics={topics} iterations={iterations} repeat={repeat} failed: {source}")]
    Cell {
        train_size: usize,
        topics: usize,
        iterations: usize,
        repeat: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for data and IO problems, 3 for
    /// non-finite numerics, 1 for bad arguments.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 1,
            Error::Numeric(_) => 3,
            Error::Cell { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
