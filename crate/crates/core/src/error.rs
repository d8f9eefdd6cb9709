use thiserror::Error;

/// Errors produced anywhere in the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("backward root must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label id {id} out of range for vocabulary of {vocab}")]
    LabelOutOfRange { id: usize, vocab: usize },

    #[error("character {0:?} is not in the grapheme vocabulary")]
    OutOfVocabulary(char),

    #[error("unknown parameter group {0:?}")]
    UnknownGroup(String),

    #[error("parameter id mismatch: {0}")]
    ParameterMismatch(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("base model did not converge: base-test WER {wer:.4} above target {target:.4}")]
    NotConverged { wer: f64, target: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
