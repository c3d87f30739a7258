//! Segmentation model for driver classification: a compact pyramid
//! encoder-decoder, the masked focal/dice loss stack with a region-level
//! classification term, optional multi-modal fusion with auxiliary
//! predictors, deterministic training with best-validation-macro-F1
//! checkpointing, and region inference.

pub mod checkpoint;
pub mod error;
pub mod fusion;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod predict;
pub mod segnet;
pub mod tensor;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use error::{ModelError, Result};
pub use loss::LossConfig;
pub use model::{Aggregate, BatchExample, PixelPrediction, RegionPrediction, SegModel};
pub use predict::{predict_event_with, InferenceSettings, Predictor};
pub use segnet::{SegNet, SegNetConfig, N_CLASSES};
pub use tensor::Tensor;
pub use train::{train, BandStats, EpochLog, TrainConfig, TrainEvent, TrainOutcome};
