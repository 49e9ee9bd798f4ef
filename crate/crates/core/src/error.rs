use thiserror::Error;

use crate::model::ValueId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("conflicting evidence: values {0} and {1} asserted both match and non-match")]
    ConflictingEvidence(ValueId, ValueId),

    #[error("value tables differ: {0}")]
    ValueTableMismatch(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("purity {0} outside (0, 1]")]
    InvalidPurity(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("action does not match the pending task: {0}")]
    ActionMismatch(String),

    #[error("stale task {got}; the pending task is {expected}")]
    StaleTask { expected: u64, got: u64 },

    #[error("link ({current}, {earlier}) is outside the short-term memory window")]
    LinkOutOfWindow { current: ValueId, earlier: ValueId },

    #[error("row value {0} is checked under more than one column")]
    BoxConflict(ValueId),

    #[error("session is not complete")]
    IncompleteSession,

    #[error("session is already complete")]
    SessionDone,

    #[error("gold partition does not cover {count} value(s): {0:?}", count = .0.len())]
    GoldCoverage(Vec<String>),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
