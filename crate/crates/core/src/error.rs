use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An image or patch does not fit the requested geometry.
    #[error("sizing error: {0}")]
    Sizing(String),
    #[error("configuration error: {0}")]
    Config(String),
    /// Exact enumeration requested beyond its supported size.
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("{what} did not converge (residual {residual:e})")]
    NonConvergence { what: String, residual: f64 },
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },
    #[error("model file truncated while reading {0}")]
    Truncated(String),
    #[error("model kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },
    #[error("format error: {0}")]
    Format(String),
    /// A dataset directory does not follow the expected layout.
    #[error("dataset layout error at {path}: {reason}")]
    Layout { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn sizing(msg: impl Into<String>) -> Self {
        Error::Sizing(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
