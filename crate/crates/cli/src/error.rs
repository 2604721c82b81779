use retarda::RetardaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// The config is malformed or violates a precondition; `key` names the offending entry.
    #[error("invalid {key}: {message}")]
    Validation { key: String, message: String },

    #[error("solver failure: {0}")]
    Solver(RetardaError),

    /// A simulation stopped before the horizon.
    #[error("simulation stopped: {0}")]
    Stopped(String),

    #[error("check failed: {0}")]
    Assertion(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Validation {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Classifies a library error raised while running `task`.
    pub fn from_task(task: &str, e: RetardaError) -> Self {
        match e {
            RetardaError::Domain(_) | RetardaError::Grid(_) | RetardaError::Config(_) | RetardaError::Input(_) => {
                CliError::validation(task, e.to_string())
            }
            _ => CliError::Solver(e),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } | CliError::Io(_) => 2,
            CliError::Solver(_) | CliError::Stopped(_) => 3,
            CliError::Assertion(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
