use std::path::{Path, PathBuf};

use tickhawkes_core::Error as CoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: file is truncated or corrupt ({message})")]
    Corrupt { path: PathBuf, message: String },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{0}")]
    Numerical(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), message: message.into() }
    }

    pub fn corrupt(path: &Path, message: impl Into<String>) -> Self {
        Error::Corrupt { path: path.to_path_buf(), message: message.into() }
    }

    /// Process exit code: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Numerical(_) => 3,
            Error::Core(e) => match e {
                CoreError::NonFinite(_)
                | CoreError::NegativeRadicand(_)
                | CoreError::Diverged { .. }
                | CoreError::SamplerExhausted(_) => 3,
                _ => 2,
            },
            _ => 2,
        }
    }
}
