use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("empty counts")]
    EmptyCounts,

    #[error("invalid structure: {0}")]
    Structure(String),

    #[error("invalid assignment: {0}")]
    Assignment(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty summary: sample count is zero")]
    EmptySummary,

    #[error("state space too large for enumeration: {0} assignments")]
    StateSpaceTooLarge(u128),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("privacy violation: {payload} is not permitted by the {protocol} protocol")]
    PrivacyViolation {
        payload: &'static str,
        protocol: &'static str,
    },

    #[error("fetch failed for learner {0}")]
    Fetch(usize),

    #[error("divergent parameters: non-finite value at index {0}")]
    Divergent(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("wire format error: {0}")]
    Wire(String),
}

pub type Result<T> = std::result::Result<T, Error>;
