//! Error type shared by all modules.

use thiserror::Error;

/// Errors produced by the scheduling laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value; the message names the offending key.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Array or parameter-tree shape mismatch.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An enumeration guard was exceeded.
    #[error("size guard exceeded: {0}")]
    Size(String),

    /// An action index does not exist in the action table.
    #[error("action decode failed: {0}")]
    Decode(String),

    /// A replay ticket was unknown, expired, or already committed.
    #[error("replay ticket error: {0}")]
    Ticket(String),

    /// A replay index was invalid.
    #[error("replay index error: {0}")]
    Index(String),

    /// Not enough committed experiences to sample a batch.
    #[error("replay underflow: {0}")]
    Underflow(String),

    /// A checkpoint file was malformed or does not match the requested
    /// architecture.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A caller violated an API contract (e.g. trained on an uncommitted
    /// experience).
    #[error("contract violation: {0}")]
    Contract(String),

    /// I/O failure while reading or writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by user-supplied configuration (exit code 2
    /// territory for the CLI), as opposed to runtime failures.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Checkpoint(_))
    }
}
