use thiserror::Error;

use stokes_bdie::Error as CoreError;

/// Failures of a command, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("output error: {0}")]
    Output(String),

    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ChecksFailed { .. } | CliError::Output(_) => 1,
            CliError::Config(_) => 2,
            CliError::Mesh(_) => 3,
            CliError::Solver(_) => 4,
        }
    }

    /// Prefixes the message with the config field it came from.
    pub fn context(self, field: &str) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{field}: {m}")),
            other => other,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Syntax { .. }
            | CoreError::UnknownIdentifier { .. }
            | CoreError::ViscosityBound { .. }
            | CoreError::CoincidentPoints { .. }
            | CoreError::InvalidInput(_)
            | CoreError::UnknownCase(_)
            | CoreError::UnknownSuite(_) => CliError::Config(e.to_string()),
            CoreError::Mesh(_) => CliError::Mesh(e.to_string()),
            CoreError::Io(_) => CliError::Output(e.to_string()),
            CoreError::UnsupportedTarget(_) | CoreError::DimensionMismatch { .. } | CoreError::Factorization(_) => {
                CliError::Solver(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
