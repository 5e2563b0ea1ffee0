use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape { what: String, expected: String, got: String },
    #[error("non-finite gradient in parameter block `{block}`")]
    NonFinite { block: String },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Sim(#[from] hexcell_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = LearnError> = std::result::Result<T, E>;

pub(crate) fn shape_err(what: &str, expected: impl ToString, got: impl ToString) -> LearnError {
    LearnError::Shape {
        what: what.to_string(),
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
