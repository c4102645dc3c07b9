use std::path::PathBuf;

use gsn_core::GsnError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad format: {0}")]
    Format(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },
    #[error("value {value} at index {index} is outside [0, 1]")]
    Range { index: usize, value: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] GsnError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}
