use thiserror::Error;

/// Errors produced by the moment, model, certificate and solver routines.
#[derive(Debug, Error)]
pub enum MraError {
    /// Shapes or lengths that do not match the representation layout.
    #[error("structural error: {0}")]
    Structure(String),

    /// Input that violates a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// A Gram list that no signal of the given representation can produce.
    #[error("infeasible gram: block {block} has rank {rank} > dimension {dim}")]
    Infeasible { block: usize, rank: usize, dim: usize },

    /// A brute-force routine asked to run beyond its size limits.
    #[error("refused: {0}")]
    Refused(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MraError>;

pub(crate) fn structure(msg: impl Into<String>) -> MraError {
    MraError::Structure(msg.into())
}

pub(crate) fn validation(msg: impl Into<String>) -> MraError {
    MraError::Validation(msg.into())
}
