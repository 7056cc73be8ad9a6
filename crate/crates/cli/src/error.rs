use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const MISSING_CHECKPOINT: i32 = 3;
    pub const MISSING_MANIFEST: i32 = 4;
    pub const BAD_INPUT: i32 = 65;
    pub const INTERNAL: i32 = 70;
    pub const IO: i32 = 74;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("checkpoint not found: {}", .0.display())]
    MissingCheckpoint(PathBuf),

    #[error("dataset manifest not found: {}", .0.display())]
    MissingManifest(PathBuf),

    /// A file exists but its contents are unusable.
    #[error("invalid input: {0}")]
    BadInput(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => exit::USAGE,
            CliError::MissingCheckpoint(_) => exit::MISSING_CHECKPOINT,
            CliError::MissingManifest(_) => exit::MISSING_MANIFEST,
            CliError::BadInput(_) => exit::BAD_INPUT,
            CliError::Io { .. } => exit::IO,
            CliError::Internal(_) => exit::INTERNAL,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<soel_meta::Error> for CliError {
    fn from(e: soel_meta::Error) -> Self {
        match e {
            soel_meta::Error::Config(m) => CliError::Config(m),
            soel_meta::Error::Checkpoint(m) => CliError::BadInput(m),
            soel_meta::Error::Io { path, source } => CliError::Io { path, source },
            soel_meta::Error::Data(e) => e.into(),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<soel_data::Error> for CliError {
    fn from(e: soel_data::Error) -> Self {
        match e {
            soel_data::Error::Io { path, source } => CliError::Io { path, source },
            soel_data::Error::Format { .. } | soel_data::Error::Insufficient(_) => CliError::BadInput(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<soel_core::Error> for CliError {
    fn from(e: soel_core::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<soel_diff::Error> for CliError {
    fn from(e: soel_diff::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}
