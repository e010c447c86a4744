use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Core(#[from] hscls_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("configuration: {0}")]
    Config(String),

    #[error("invalid state machine definition: {0}")]
    Definition(String),

    #[error("invalid event: {0}")]
    InvalidEvent(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("registry: {0}")]
    Registry(String),

    #[error("action {action} failed: {reason}")]
    Action { action: String, reason: String },

    #[error("run {0} interrupted")]
    Interrupted(String),
}

impl PipelineError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.into(), source }
    }

    pub(crate) fn action(action: &str, reason: impl std::fmt::Display) -> Self {
        PipelineError::Action { action: action.to_string(), reason: reason.to_string() }
    }
}
