//! Self-supervised, supervised and alternating training of the ChromaNet.

mod checkpoint;
mod config;
mod data;
mod engine;
mod estimator;
mod log;
mod optimizer;
mod sampler;
mod schedule;

pub use checkpoint::{f32_as_f64, Checkpoint, CHECKPOINT_SCHEMA};
pub use config::{EpochKind, Objective, TrainConfig, TrainMode};
pub use data::{draw_windows, Corpus, TrackData};
pub use engine::{
    alternate_train, batch_gradient, EpochRecord, Example, StepRecord, TrainState, Trainer,
};
pub use estimator::{is_collapsed, Estimator, COLLAPSE_THRESHOLD_BITS, MIN_PROBE_ITEMS};
pub use log::NdjsonLog;
pub use optimizer::AdamW;
pub use sampler::{sample_intervals, MAX_SHIFT};
pub use schedule::LrSchedule;
