//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid streamline: {0}")]
    InvalidStreamline(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("stratified split impossible: {0}")]
    StratificationImpossible(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("invalid latent vector: {0}")]
    InvalidLatent(String),

    #[error("empty reference set")]
    EmptyReference,

    #[error("degenerate ROC input: {0}")]
    DegenerateRoc(String),

    #[error("degenerate groups: {0}")]
    DegenerateGroups(String),

    #[error("corrupt file at byte {offset}: {message}")]
    CorruptFile { offset: u64, message: String },

    #[error("unsupported format version {found}, expected {expected}")]
    UnsupportedVersion { found: u16, expected: u16 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
