use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration or arguments supplied by the caller.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line count mismatch: {pivot_path} has {pivot_lines} lines, {other_path} has {other_lines}")]
    LineCountMismatch {
        pivot_path: PathBuf,
        pivot_lines: usize,
        other_path: PathBuf,
        other_lines: usize,
    },

    #[error("{path}: line {line}: invalid UTF-8")]
    InvalidUtf8 { path: PathBuf, line: usize },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Input data violates an operation's precondition.
    #[error("{0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {message} (id {id})")]
    Protocol { id: u64, message: String },

    /// A generation run stopped early; everything before `checkpoint` was fully processed.
    #[error("generation aborted after {checkpoint} candidates: {source}")]
    Aborted {
        checkpoint: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage, 2 data, 3 transport.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Transport(_) | Error::Protocol { .. } => 3,
            Error::Aborted { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
