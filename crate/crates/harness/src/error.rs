use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("config error: {path}: {msg}")]
    ConfigFile { path: PathBuf, msg: String },

    #[error("{stage}: {source}")]
    Core {
        stage: &'static str,
        #[source]
        source: aoi_core::Error,
    },

    #[error("{stage}: solver did not converge ({detail})")]
    NonConvergence { stage: String, detail: String },

    #[error("reconstruction masked {fraction:.4} of cells, threshold {threshold}")]
    MaskedThreshold { fraction: f64, threshold: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::ConfigFile { .. } => 2,
            HarnessError::NonConvergence { .. } => 3,
            HarnessError::MaskedThreshold { .. } => 4,
            HarnessError::Core { .. } | HarnessError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attaches the pipeline stage to a core error.
pub(crate) trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> Stage<T> for aoi_core::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| HarnessError::Core { stage, source })
    }
}
