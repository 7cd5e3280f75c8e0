//! CLI error type carrying the documented exit codes:
//! 0 success, 2 usage/validation, 3 I/O, 4 numerical non-convergence.

use std::fmt;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    NonConvergence(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Io(msg.into())
    }

    pub fn non_convergence(msg: impl Into<String>) -> Self {
        CliError::NonConvergence(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::NonConvergence(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Io(msg) => write!(f, "{msg}"),
            CliError::NonConvergence(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Library errors map onto the exit-code table: data/validation problems
/// are usage errors, filesystem problems are I/O.
impl From<qwli::Error> for CliError {
    fn from(err: qwli::Error) -> Self {
        match err {
            qwli::Error::Io(e) => CliError::Io(e.to_string()),
            qwli::Error::CsvParse { .. } => CliError::Usage(err.to_string()),
            qwli::Error::Json(_) => CliError::Usage(err.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}
