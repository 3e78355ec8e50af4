use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI command, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("cannot read `{}`: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write `{}`: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Topology(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    /// 1 input error, 2 topology rejection, 3 solver failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Read { .. } | CliError::Write { .. } => 1,
            CliError::Topology(_) => 2,
            CliError::Solver(_) => 3,
        }
    }

    pub(crate) fn input(err: impl std::fmt::Display) -> Self {
        CliError::Input(err.to_string())
    }
}
