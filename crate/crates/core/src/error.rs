use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("cloud has {count} points, at least 4 are required")]
    EmptyCloud { count: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("bad dimension: {0}")]
    BadDimension(String),

    #[error("split plane leaves one side empty")]
    EmptySide,

    #[error("no finger made contact with the object")]
    NoContacts,

    #[error("wrench set is empty")]
    EmptyWrenchSet,

    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("invalid run document: {0}")]
    InvalidDocument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user-supplied parameters rather than by the data.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::InvalidConfig { .. } | Error::BadDimension(_))
    }
}
