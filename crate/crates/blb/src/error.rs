use std::path::PathBuf;

use crate::procedures::WorkUnit;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] blb_core::Error),

    #[error("{unit}: {source}")]
    Unit {
        unit: WorkUnit,
        #[source]
        source: blb_core::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("thread pool: {0}")]
    Pool(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for error records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Core(_) => "core",
            Error::Unit { .. } => "estimator",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Argument(_) => "argument",
            Error::Format { .. } => "format",
            Error::Pool(_) => "pool",
        }
    }
}
