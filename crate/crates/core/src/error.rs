use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("usage: {0}")]
    Usage(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("input too short: {0}")]
    TooShort(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("no subject: {found} moved points, need {needed}")]
    NoSubject { found: usize, needed: usize },

    #[error("subject never detected in {scans} scans")]
    NoSubjectEver { scans: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no dominant spike: {0}")]
    NoSpike(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("overlapping windows: {0}")]
    Overlap(String),

    #[error("forward cache does not match parameters: {0}")]
    StaleCache(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("cannot access {}", path.display())]
    File { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Usage and configuration problems are the caller's fault; everything
    /// else is a data or runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Usage(_) | Error::Config(_))
    }
}
