use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("missing required setting `{0}` (pass it as a flag or in the config file)")]
    Missing(&'static str),

    #[error("cannot read config {path}: {reason}")]
    ConfigFile { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] cgtc_core::Error),
}

impl CliError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        use cgtc_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Missing(_) | CliError::ConfigFile { .. } => 1,
            CliError::Core(E::InvalidSpec { .. } | E::InvalidParameter { .. } | E::InvalidAllocation(_)) => 1,
            CliError::Core(_) | CliError::Io { .. } => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
