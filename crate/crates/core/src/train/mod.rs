//! Unpaired data ingestion, the alternating optimization loop, and
//! checkpointing.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod trainer;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use config::{AlphaSampling, TrainConfig};
pub use data::{sample_batch, Batch, ImageSet, Loader, RngState};
pub use trainer::{
    fit, fit_until, load_backbone, load_checkpoint, Rendering, StepReport, Trainer, TrainingLog, CHECKPOINT_FILE,
    LOG_FILE,
};
