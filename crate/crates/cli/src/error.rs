use std::path::PathBuf;

use stone_core::StoneError;
use thiserror::Error;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_COLLAPSE: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("cannot parse {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("data: {0}")]
    Data(String),

    #[error("training collapsed: prediction entropy {entropy:.3} bits is below {threshold} bits")]
    Collapse { entropy: f64, threshold: f64 },

    #[error(transparent)]
    Core(#[from] StoneError),
}

impl CliError {
    /// Process exit status: 2 config, 3 data, 4 collapse, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::ConfigParse { .. } => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Collapse { .. } => EXIT_COLLAPSE,
            CliError::Core(e) => match e {
                StoneError::Config(_) | StoneError::DegenerateFrequency(_) | StoneError::CropOutOfRange(_) => {
                    EXIT_CONFIG
                }
                StoneError::ClipTooShort { .. }
                | StoneError::InsufficientBandwidth { .. }
                | StoneError::InvalidKey(_)
                | StoneError::Manifest { .. }
                | StoneError::EmptySubsample { .. }
                | StoneError::EmptyDataset(_)
                | StoneError::UnsupportedAudio(_)
                | StoneError::CalibrationNotDiscriminative { .. }
                | StoneError::Io { .. }
                | StoneError::Wav(_)
                | StoneError::Flac(_)
                | StoneError::Csv(_) => EXIT_DATA,
                _ => EXIT_OTHER,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
