use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape error: {0}")]
    ShapeError(String),

    #[error("numerical error in {0}")]
    NumericalError(String),

    #[error("training failed: {0}")]
    TrainingError(String),

    #[error("region fully truncated by the crop for event {0}")]
    TruncatedRegion(String),

    #[error("checkpoint corrupt: {0}")]
    CorruptCheckpoint(String),

    #[error(transparent)]
    Core(#[from] forest_core::Error),

    #[error("eval: {0}")]
    Eval(#[from] forest_eval::EvalError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
