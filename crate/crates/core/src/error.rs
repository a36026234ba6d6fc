use std::fmt;

use crate::policy::ContextKey;

/// Errors produced anywhere in the unlearning lab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no corpus")]
    NoCorpus,
    #[error("out-of-vocabulary probe: {0:?}")]
    OutOfVocabulary(String),
    #[error("empty selection")]
    EmptySelection,
    #[error("empty target")]
    EmptyTarget,
    #[error("unmatchable phrase: {0:?}")]
    UnmatchablePhrase(Vec<u32>),
    #[error("numerical blow-up at context {0}")]
    NumericalBlowUp(RowLabel),
    #[error("degenerate ratio at group {group}, completion {completion}, token {token}")]
    DegenerateRatio {
        group: usize,
        completion: usize,
        token: usize,
    },
    #[error("insufficient text")]
    InsufficientText,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Coarse classification used by the CLI to pick an exit code.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) => ErrorClass::Config,
            Error::NumericalBlowUp(_) | Error::DegenerateRatio { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

/// Identifies a parameter row in error messages: a concrete context or the shared fallback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowLabel {
    Context(ContextKey),
    Fallback,
}

impl fmt::Display for RowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowLabel::Context(key) => write!(f, "{:?}", key.ids()),
            RowLabel::Fallback => f.write_str("<fallback>"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
