use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("input contains no data rows")]
    EmptyInput,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "seeding failed: {found} of {wanted} components reach the minimum size of {min_size} samples"
    )]
    Seeding {
        found: usize,
        wanted: usize,
        min_size: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("json: {0}")]
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

impl Error {
    /// Process exit status for the command-line tool: 2 configuration,
    /// 3 data, 4 seeding failure, 5 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Seeding { .. } => 4,
            Error::Numerical(_) => 5,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::EmptyInput
            | Error::Data(_)
            | Error::DimensionMismatch { .. }
            | Error::Json(_) => 3,
        }
    }
}
