use kahlerlab_core::Error;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unparseable or invalid configuration; exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numerical failure; exit code 3.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NonConvergence { .. }
            | Error::PositivityBreakdown { .. }
            | Error::NotConverged { .. }
            | Error::Degenerate(_)
            | Error::Fit(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e.to_string()))
    }
}
