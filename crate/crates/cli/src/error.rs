use std::path::{Path, PathBuf};

use lassoggm::error::GgmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(GgmError),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    /// Argument errors raised by the library are configuration problems.
    pub fn from_core(err: GgmError) -> Self {
        match err {
            GgmError::InvalidArgument(msg) => CliError::Config(msg),
            other => CliError::Numerical(other),
        }
    }
}

impl From<GgmError> for CliError {
    fn from(err: GgmError) -> Self {
        CliError::from_core(err)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
