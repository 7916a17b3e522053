use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{0} is not empty; pass --force to overwrite the generated artifacts")]
    OutputExists(PathBuf),

    #[error("missing artifact {0}; run the earlier pipeline stage first")]
    MissingArtifact(PathBuf),

    #[error("checksum mismatch for {0}")]
    Checksum(PathBuf),

    #[error("artifact {path} was produced by config {found}, current config is {expected}")]
    StaleArtifact {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("malformed artifact {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] lightloc_core::Error),
}

impl CliError {
    /// 1 for usage and configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::OutputExists(_) => 1,
            CliError::Core(lightloc_core::Error::InvalidConfig(_) | lightloc_core::Error::InvalidSpec(_)) => 1,
            _ => 2,
        }
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}
