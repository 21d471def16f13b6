//! Configuration, persistence and orchestration behind the `logkdv` binary.

pub mod config;
pub mod io;
pub mod run;
pub mod svg;

/// Errors of the command-line layer, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or input data.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Compute(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Compute(_) | CliError::Io(_) => 3,
        }
    }
}
