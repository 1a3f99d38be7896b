use std::path::PathBuf;

use race_dde::Error as CoreError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 74;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("model validation failed: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("chart: {0}")]
    Chart(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numerical(_) | CliError::Chart(_) => EXIT_NUMERICAL,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::InvalidModel(_)
            | CoreError::InvalidSignal(_)
            | CoreError::NoMMatrixRegime { .. }
            | CoreError::Domain { .. }
            | CoreError::ResonantPoint { .. }
            | CoreError::SingularEigenvector
            | CoreError::TrivialSystem
            | CoreError::SpecialHypothesis { .. } => CliError::Validation(msg),
            CoreError::InvalidProblem(_) => CliError::Usage(msg),
            CoreError::Diverged { .. }
            | CoreError::InsufficientTail { .. }
            | CoreError::NoOscillation
            | CoreError::SingularResolvent { .. } => CliError::Numerical(msg),
        }
    }
}
