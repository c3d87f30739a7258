use thiserror::Error;

use crate::raster::Band;

/// Errors raised by the raster, ingest, composite, augment, and feature layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("region mask selects no pixels")]
    EmptyRegion,

    #[error("crop size {size} exceeds image dimensions {width}x{height}")]
    CropTooLarge {
        size: usize,
        width: usize,
        height: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("missing band: {0}")]
    MissingBand(Band),

    #[error("no scenes available")]
    NoScenes,

    #[error("manifest error at line {line}: {message}")]
    ManifestError { line: usize, message: String },

    #[error("validation failed: {0}")]
    ValidationError(String),

    #[error("unknown driver category: {0:?}")]
    UnknownCategory(String),

    #[error("predictor {0} has no data in the aggregation window")]
    MissingPredictor(String),

    #[error("feature construction failed: {0}")]
    FeatureError(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
