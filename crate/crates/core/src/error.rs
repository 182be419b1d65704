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

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid layout: {field}: {message}")]
    InvalidLayout { field: String, message: String },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("board capacity exceeded: {requested} rows requested, capacity {capacity}")]
    Capacity { requested: usize, capacity: usize },

    #[error("illegal action: row {row}, moves {moves}: {reason}")]
    IllegalAction {
        row: usize,
        moves: u32,
        reason: &'static str,
    },

    #[error("no legal action available")]
    NoLegalAction,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("scenario generation exhausted its rejection budget after {attempts} attempts ({accepted} accepted)")]
    RejectionBudget { attempts: usize, accepted: usize },

    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// Short machine-readable tag, used by the CLI and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::InvalidLayout { .. } => "invalid_layout",
            Error::InvalidScenario(_) => "invalid_scenario",
            Error::Capacity { .. } => "capacity",
            Error::IllegalAction { .. } => "illegal_action",
            Error::NoLegalAction => "no_legal_action",
            Error::Dimension(_) => "dimension",
            Error::Checkpoint(_) => "checkpoint",
            Error::RejectionBudget { .. } => "rejection_budget",
            Error::Config(_) => "config",
        }
    }
}
