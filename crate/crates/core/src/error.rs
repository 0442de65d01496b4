use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid config: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{path}: row {row}, column `{column}`: {message}")]
    Profile {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("length mismatch: {what} has {found} rows, expected {expected}")]
    LengthMismatch {
        what: String,
        found: usize,
        expected: usize,
    },

    #[error("duplicate agent id {0}")]
    DuplicateAgent(u32),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("hour {0} is outside 0..24")]
    HourOutOfRange(u32),

    #[error("invalid tariff: {0}")]
    Tariff(String),

    #[error("negative energy quantity: {0}")]
    NegativeEnergy(f64),

    #[error("invalid order from agent {agent}: {message}")]
    Order { agent: u32, message: String },

    #[error("horizon exceeded: step {step} of {horizon}")]
    HorizonExceeded { step: usize, horizon: usize },

    #[error("training diverged at step {step}: {message}")]
    Diverged { step: usize, message: String },

    #[error("invalid training config: {0}")]
    TrainConfig(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
