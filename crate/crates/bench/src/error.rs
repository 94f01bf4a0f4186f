use std::path::PathBuf;

use ood_core::OodError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure { path: PathBuf, source: std::io::Error },
    #[error("malformed json in {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("run failed ({message}); see {}", manifest.display())]
    RunFailed { manifest: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] OodError),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> BenchError {
    let path = path.into();
    move |source| BenchError::IoFailure { path, source }
}
