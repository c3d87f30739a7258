//! Core library for deforestation-driver classification pipelines:
//! raster primitives, event ingestion, cloud-minimized compositing,
//! training-time augmentation, and auxiliary feature construction.

pub mod augment;
pub mod composite;
pub mod error;
pub mod features;
pub mod grid;
pub mod hash;
pub mod ingest;
pub mod raster;

pub use error::{Error, Result};
pub use grid::Grid;
pub use ingest::DriverClass;
