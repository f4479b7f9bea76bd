use std::path::PathBuf;

use active_texture_core::{ClassifierError, DatasetError, EngineError, MetricsError};
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Trial {
        context: String,
        #[source]
        source: EngineError,
    },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("{path}: {message}")]
    ResultFile { path: PathBuf, message: String },
    #[error("human log line {line}: {message}")]
    LogParse { line: usize, message: String },
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Process exit status: 1 configuration, 2 data, 3 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Trial { source: EngineError::Classifier(ClassifierError::NumericalDivergence { .. }), .. }
            | Self::Classifier(ClassifierError::NumericalDivergence { .. }) => 3,
            Self::Trial { source: EngineError::InvalidSpec(_), .. } => 1,
            Self::Classifier(ClassifierError::Param(_)) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
