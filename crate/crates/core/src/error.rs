use thiserror::Error;

/// Errors raised by the fitting library.
#[derive(Debug, Error)]
pub enum MpmError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite objective: {0}")]
    NonFinite(String),

    #[error("optimum unavailable: {0}")]
    OptimumUnavailable(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MpmError>;

impl MpmError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        MpmError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
