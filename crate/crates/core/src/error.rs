use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),
    /// A run configuration or domain description is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// An input file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// The walk hit its step budget before reaching the boundary.
    #[error("censored walk: step budget of {max_steps} exhausted")]
    Censored { max_steps: u64 },
    /// Every walk started at a point was censored.
    #[error("empty estimate: all {n_censored} walks censored")]
    EmptyEstimate { n_censored: u64 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(path: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end: 2 for bad input,
    /// 3 for failures of the numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) | Error::Parse(_) | Error::Io { .. } => 2,
            Error::Numerical(_) | Error::Censored { .. } | Error::EmptyEstimate { .. } => 3,
        }
    }
}
