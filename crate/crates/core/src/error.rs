use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("ingestion error in {}: {message}", path.display())]
    Ingestion { path: PathBuf, message: String },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },
    #[error("schema version mismatch: expected {expected}, found {found}")]
    Schema { expected: u32, found: u32 },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("report assembly failed for dimension {dim}: {message}")]
    Assembly { dim: usize, message: String },
    #[error("image error: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable lowercase name of the variant, for machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Contract(_) => "contract",
            Error::Ingestion { .. } => "ingestion",
            Error::Parse { .. } => "parse",
            Error::Stratification(_) => "stratification",
            Error::Training { .. } => "training",
            Error::Schema { .. } => "schema",
            Error::NotFound(_) => "not_found",
            Error::State(_) => "state",
            Error::Assembly { .. } => "assembly",
            Error::Image(_) => "image",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl From<image::ImageError> for Error {
    fn from(e: image::ImageError) -> Self {
        Error::Image(e.to_string())
    }
}
