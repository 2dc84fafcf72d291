use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite numeric input: {0}")]
    NumericInput(String),

    #[error("symbol mapping error: {0}")]
    Mapping(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("enumeration of {states} states exceeds the cap of {cap}")]
    Capacity { states: u128, cap: u128 },

    #[error("malformed channel file {path}: {reason}")]
    ChannelFile { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
