use std::path::PathBuf;

use ficle_core::{EncodingError, MetricsError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    BadCheckpoint { path: PathBuf, message: String },
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint family '{0}' cannot be constructed here: no pretrained weights or tokenizer are bundled")]
    FamilyUnavailable(String),
    #[error("strategy mismatch: {0}")]
    StrategyMismatch(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("no usable training examples ({excluded} excluded)")]
    EmptyTrainingSet { excluded: usize },
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<ModelError>,
    },
    #[error("{0}")]
    Other(String),
}

impl ModelError {
    pub fn in_stage(self, stage: &'static str) -> ModelError {
        match self {
            e @ ModelError::Stage { .. } => e,
            e => ModelError::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> ModelError {
    let path = path.into();
    move |source| ModelError::Io { path, source }
}
