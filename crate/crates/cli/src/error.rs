use std::path::{Path, PathBuf};

use robreg::ErrorKind;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] robreg::Error),

    /// The command ran but its result fails a stability or regulation check.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Precondition => 2,
                ErrorKind::Synthesis | ErrorKind::Numerical => 3,
            },
            CliError::Failed(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
