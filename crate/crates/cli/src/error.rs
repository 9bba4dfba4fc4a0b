use std::fmt;
use std::process::ExitCode;

use sketchgroup::Error;

/// Failure of a subcommand, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration: exit 1.
    Usage(String),
    /// Unreadable, malformed or inconsistent input: exit 2.
    Data(String),
    /// Anything that went wrong while computing: exit 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        let root = match &e {
            Error::AtRecord { source, .. } => source.as_ref(),
            other => other,
        };
        if matches!(root, Error::Config(_)) {
            CliError::Usage(msg)
        } else if e.is_data_error() {
            CliError::Data(msg)
        } else {
            CliError::Runtime(msg)
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
