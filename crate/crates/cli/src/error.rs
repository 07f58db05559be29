use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config key `{key}`: {reason}")]
    Semantic { key: String, reason: String },

    /// A physical parameter rejected by the library, with the key it came from.
    #[error("config key `{key}`: {source}")]
    Domain {
        key: String,
        #[source]
        source: spinpoint::Error,
    },

    #[error(transparent)]
    Compute(#[from] spinpoint::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot serialize config: {0}")]
    Serialize(String),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn semantic(key: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Semantic {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn domain(key: impl Into<String>, source: spinpoint::Error) -> Self {
        CliError::Domain {
            key: key.into(),
            source,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
