use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{field}: no such file or directory: {}", path.display())]
    MissingPath { field: String, path: PathBuf },
    #[error("no completed runs under {}", dir.display())]
    NoRuns { dir: PathBuf },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {detail}", path.display())]
    Artifact { path: PathBuf, detail: String },
    #[error(transparent)]
    Core(#[from] gae_core::Error),
}

impl HarnessError {
    /// 2 for anything wrong with the inputs, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::MissingPath { .. } | Self::NoRuns { .. } => 2,
            Self::Core(gae_core::Error::InvalidConfig(_) | gae_core::Error::InvalidModel(_)) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
