use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the STONE pipeline.
#[derive(Debug, Error)]
pub enum StoneError {
    #[error("clip too short: {actual:.3} s available, at least {required:.3} s required")]
    ClipTooShort { required: f64, actual: f64 },

    #[error(
        "insufficient bandwidth: sample rate {sample_rate} Hz cannot represent {max_freq:.1} Hz"
    )]
    InsufficientBandwidth { sample_rate: u32, max_freq: f64 },

    #[error("crop out of range: {0} (expected 0..=15)")]
    CropOutOfRange(i64),

    #[error("bad frequency span: expected {expected} rows, got {actual}")]
    BadFrequencySpan { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate CoF frequency {0}: must be coprime with 12")]
    DegenerateFrequency(i64),

    #[error("normalization statistics missing")]
    NormalizationMissing,

    #[error("calibration sample not discriminative (max - median = {spread:.4})")]
    CalibrationNotDiscriminative { spread: f64 },

    #[error("invalid key label {0:?}")]
    InvalidKey(String),

    #[error("manifest {path}, row {row}: {message}")]
    Manifest {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("subsampling fraction {fraction} of {n} labeled entries selects nothing")]
    EmptySubsample { fraction: f64, n: usize },

    #[error("length mismatch: {predictions} predictions vs {references} references")]
    LengthMismatch {
        predictions: usize,
        references: usize,
    },

    #[error("non-finite loss at step {step} (items: {items:?})")]
    NonFiniteLoss { step: u64, items: Vec<String> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("unsupported audio format: {0}")]
    UnsupportedAudio(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Flac(#[from] claxon::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl StoneError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        StoneError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = StoneError> = std::result::Result<T, E>;
