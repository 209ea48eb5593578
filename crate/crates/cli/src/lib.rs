//! `matern` command line and grid server.

pub mod commands;
pub mod config;
pub mod server;

use matern_core::MaternError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, bad flag values or an unreadable input file. Exit status 2.
    #[error("{0}")]
    Usage(String),
    /// The computation itself failed. Exit status 1.
    #[error(transparent)]
    Numeric(MaternError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<MaternError> for CliError {
    fn from(e: MaternError) -> Self {
        CliError::Numeric(e)
    }
}
