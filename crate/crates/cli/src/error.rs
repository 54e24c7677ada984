use std::path::Path;
use std::process::ExitCode;

use switchmorse::Error;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        })
    }

    pub fn io(path: &Path, what: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {what}", path.display()))
    }

    /// Prefixes the message, keeping the category.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{ctx}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{ctx}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{ctx}: {m}")),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::DimensionMismatch { .. } | Error::IndexOutOfRange { .. } => CliError::Config(e.to_string()),
            Error::Io(_) | Error::Parse(_) | Error::Json(_) => CliError::Io(e.to_string()),
            Error::IntegrationDiverged { .. }
            | Error::EmptyDataset
            | Error::Solver(_)
            | Error::Fit(_)
            | Error::Aggregation(_) => CliError::Numerical(e.to_string()),
        }
    }
}
