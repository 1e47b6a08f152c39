//! Crate-wide error type and exit-code mapping.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or layer shape disagreement.
    #[error("shape error in {op}: {details}")]
    Shape { op: &'static str, details: String },

    /// Invalid input data (image contents, subband layout, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Configuration file rejected at a specific line.
    #[error("config error at line {line}: {msg}")]
    ConfigLine { line: usize, msg: String },

    /// Filesystem failure tied to a path.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Undecodable or unencodable image file.
    #[error("image error on {path}: {msg}")]
    Image { path: PathBuf, msg: String },

    /// Checkpoint file violates the serialized format.
    #[error("checkpoint format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    /// API misuse (e.g. backward on a non-scalar).
    #[error("contract violation: {0}")]
    Contract(String),
}

impl Error {
    pub fn shape(op: &'static str, details: impl Into<String>) -> Self {
        Error::Shape {
            op,
            details: details.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 0 ok, 2 config/contract, 3 i/o, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Image { .. } | Error::Format { .. } => 3,
            Error::NonFiniteLoss { .. } => 4,
            _ => 2,
        }
    }
}
