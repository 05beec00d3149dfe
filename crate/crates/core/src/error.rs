use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("encoding error: field `{field}` has index {index} outside cardinality {cardinality}")]
    Encoding {
        field: String,
        index: u32,
        cardinality: u32,
    },
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("explanation cost error: {0}")]
    Cost(String),
    #[error(
        "cold start: {available} real fraud examples available, {required} required; \
         supply a simulator seed-set"
    )]
    ColdStart { available: usize, required: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("review queue full (capacity {0})")]
    Backpressure(usize),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("retraining cycle aborted at stage {stage}: {reason}")]
    CycleAborted { stage: u8, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn training(msg: impl Into<String>) -> Self {
        Error::Training(msg.into())
    }
}
