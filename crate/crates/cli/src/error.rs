use std::fmt;
use std::path::Path;

use fex_core::FexError;

/// Failure of a CLI command. Printed as `error: <category>: <message>`.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(FexError),
    Io(String),
    Checkpoint(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.category(),
            CliError::Io(_) => "io",
            CliError::Checkpoint(_) => "checkpoint",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Checkpoint(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        };
        // keep the report on one line
        write!(f, "{}", msg.replace('\n', " "))
    }
}

impl std::error::Error for CliError {}

impl From<FexError> for CliError {
    fn from(e: FexError) -> Self {
        match e {
            FexError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Core(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
