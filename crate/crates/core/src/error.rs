//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty distribution: {0}")]
    EmptyDistribution(&'static str),

    #[error("support of size {size} exceeds limit {limit}; use the Sinkhorn solver instead")]
    SupportTooLarge { size: usize, limit: usize },

    #[error("embedding kind {kind} requires discrete states/actions")]
    DiscreteOnlyEmbedding { kind: &'static str },

    #[error("non-finite action at step {step}: {detail}")]
    NonFiniteAction { step: usize, detail: String },

    #[error("trajectory enumeration would exceed {limit} paths ({count}); use a smaller instance")]
    EnumerationTooLarge { count: usize, limit: usize },

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("runtime failure at iteration {iter}: {msg}")]
    Runtime { iter: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
