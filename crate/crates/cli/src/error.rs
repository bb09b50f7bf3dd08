use std::path::PathBuf;

use thiserror::Error;

/// Everything a command can fail with, grouped by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("invalid scenario field `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("{path}: row {row}, column `{column}`: {message}")]
    Schema { path: PathBuf, row: usize, column: String, message: String },

    #[error(transparent)]
    Core(#[from] ambisense::Error),

    #[error("{0}")]
    Tolerance(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn validation(field: impl Into<String>, reason: impl std::fmt::Display) -> Self {
        CliError::Validation { field: field.into(), reason: reason.to_string() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn schema(path: impl Into<PathBuf>, row: usize, column: impl Into<String>, message: impl std::fmt::Display) -> Self {
        CliError::Schema { path: path.into(), row, column: column.into(), message: message.to_string() }
    }

    /// 0 success, 1 validation, 2 tolerance failure, 3 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Tolerance(_) => 2,
            CliError::Io { .. } => 3,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
