//! Neural stages of the inconsistency explainer: span extraction, type and
//! component classification, entity typing, and the pipeline joining them.

pub mod checkpoint;
pub mod classifier;
pub mod config;
pub mod entity_typer;
pub mod error;
pub mod family;
pub mod network;
pub mod params;
pub mod pipeline;
pub mod span_extractor;
pub mod train;

pub use config::{EncoderConfig, TrainConfig};
pub use error::{ModelError, Result};
pub use family::CheckpointFamily;
