use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("{path}:{line}: parse error: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("no recorded observation for epoch {epoch} at configuration {config}")]
    Lookup { epoch: usize, config: String },

    #[error("spec error: {0}")]
    Spec(String),

    #[error("incomplete run, missing: {}", .0.join(", "))]
    Incomplete(Vec<String>),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Spec(_) | Error::Domain(_) => 2,
            Error::Io { .. } | Error::Incomplete(_) | Error::Parse { .. } | Error::Format(_) | Error::Lookup { .. } => 3,
            Error::Numeric(_) => 4,
        }
    }
}
