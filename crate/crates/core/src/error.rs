use thiserror::Error;

/// Errors produced by the identification and combinatorial-dynamics pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cell index {index:?} out of range for subdivisions {subdivisions:?}")]
    IndexOutOfRange {
        index: Vec<usize>,
        subdivisions: Vec<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("integration diverged from {start:?} at t = {t}")]
    IntegrationDiverged { start: Vec<f64>, t: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("aggregation failed: {0}")]
    Aggregation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
