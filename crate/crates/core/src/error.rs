use std::io;

use thiserror::Error;

/// Errors raised anywhere in the training stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown environment '{0}' (valid: gridworld-5x5, pointmass-2d, chain-3)")]
    UnknownEnv(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("device {device} aborted round {round}: {reason}")]
    DeviceAbort {
        device: u32,
        round: u64,
        reason: String,
    },

    #[error("no valid envelopes received for round {0}")]
    NoEnvelopes(u64),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
