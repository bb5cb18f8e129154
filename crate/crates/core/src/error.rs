use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ArgError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ArgError {
    #[error("sequence length mismatch: expected {expected} markers, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("sequences {0} and {1} disagree on shared ancestral material")]
    Incompatible(String, String),

    #[error("illegal breakpoint {breakpoint} for sequence {sequence}")]
    IllegalBreakpoint { sequence: String, breakpoint: usize },

    #[error("action {action} is not legal in the current state")]
    IllegalAction { action: String },

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("state space too large: more than {cap} canonical states")]
    StateSpaceTooLarge { cap: usize },

    #[error("feature dimension mismatch: model expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid encoder configuration: {0}")]
    InvalidEncoder(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("only {available} segregating sites, {requested} requested; resimulate with another seed or a longer region")]
    TooFewSites { available: usize, requested: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("branch cap of {cap} genealogies exceeded")]
    BranchCapExceeded { cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ArgError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ArgError::Io {
            path: path.into(),
            source,
        }
    }
}
