use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero vector cannot be used for similarity")]
    ZeroVector,

    #[error("embedding provider failed on batch {batch} after {attempts} attempts: {message}")]
    Provider {
        batch: usize,
        attempts: u32,
        message: String,
    },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("generation failed after {attempts} attempts: {reason}")]
    Generation {
        attempts: u32,
        reason: String,
        transcripts: Vec<String>,
    },

    #[error("unknown {kind}: {name}")]
    Unknown { kind: &'static str, name: String },

    #[error("{message}: {}", ids.join(", "))]
    Discrepancy { message: String, ids: Vec<String> },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("missing upstream artifact {}: run stage `{stage}` first or pass --force", path.display())]
    MissingUpstream { stage: String, path: PathBuf },

    #[error("output directory is locked by another run: {}", .0.display())]
    Locked(PathBuf),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable label used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Record { .. } => "record",
            Error::Config(_) => "config",
            Error::InvalidInput(_) => "invalid_input",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ZeroVector => "zero_vector",
            Error::Provider { .. } => "provider",
            Error::Transport(_) => "transport",
            Error::Generation { .. } => "generation",
            Error::Unknown { .. } => "unknown_reference",
            Error::Discrepancy { .. } => "discrepancy",
            Error::UndefinedCorrelation(_) => "undefined_correlation",
            Error::MissingUpstream { .. } => "missing_upstream",
            Error::Locked(_) => "locked",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// Ids carried by the error, if any.
    pub fn offending_ids(&self) -> Vec<String> {
        match self {
            Error::Discrepancy { ids, .. } => ids.clone(),
            Error::Unknown { name, .. } => vec![name.clone()],
            Error::MissingUpstream { path, .. } | Error::Io { path, .. } => {
                vec![path.display().to_string()]
            }
            Error::Locked(path) => vec![path.display().to_string()],
            _ => Vec::new(),
        }
    }
}
