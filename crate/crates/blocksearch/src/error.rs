//! Crate-wide error type and exit-code mapping for the CLI.

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Text that failed to parse (block configs, space specs, manifests).
    #[error("parse error: {0}")]
    Parse(String),

    /// A constructed value violated its invariants.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Tensor or graph shapes disagree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// NaN or infinity escaped a numeric operation.
    #[error("non-finite values in {0}")]
    NonFinite(String),

    /// Dataset files are missing, truncated, or malformed.
    #[error("data error: {0}")]
    Data(String),

    /// Persisted search state is unusable (corrupt log, config-hash mismatch).
    #[error("state error: {0}")]
    State(String),

    /// A failure during training, search, or evaluation.
    #[error("runtime error: {0}")]
    Runtime(String),

    /// I/O failure with the path or action that caused it.
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 0 ok, 1 usage, 2 data, 3 runtime.
    /// Usage errors (code 1) are handled by argument parsing before an
    /// `Error` value exists.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_)
            | Error::InvalidConfig(_)
            | Error::Shape(_)
            | Error::Data(_)
            | Error::State(_)
            | Error::Io { .. } => 2,
            Error::NonFinite(_) | Error::Runtime(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
