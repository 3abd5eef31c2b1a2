use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, configuration or input files. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Reading or writing files. Exit code 2.
    #[error("{0}")]
    Io(String),
    /// A computation failed on valid inputs. Exit code 1.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn numerical(err: impl std::fmt::Display) -> Self {
        CliError::Numerical(err.to_string())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Numerical(_) => ExitCode::from(1),
            CliError::Usage(_) | CliError::Io(_) => ExitCode::from(2),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
