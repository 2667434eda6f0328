use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stone_core::datasets::{load_manifest, SynthSpec};
use stone_core::frontend::CqtParams;
use stone_core::training::{Corpus, TrainConfig};
use stone_core::ChromaNetConfig;

use crate::error::{CliError, Result};

/// Where a corpus comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// CSV manifest, optionally restricted to one split.
    Manifest {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        split: Option<String>,
    },
    /// Rendered in memory from a generator spec.
    Synth(SynthSpec),
}

impl DataSource {
    pub fn load(&self, cqt: &CqtParams) -> Result<Corpus> {
        match self {
            DataSource::Manifest { path, split } => {
                let mut manifest = load_manifest(path)?;
                if let Some(split) = split {
                    manifest = manifest.split(split);
                }
                if manifest.is_empty() {
                    return Err(CliError::Data(format!("{} has no usable entries", path.display())));
                }
                Ok(Corpus::from_manifest(&manifest, cqt)?)
            }
            DataSource::Synth(spec) => Ok(Corpus::from_synth(spec, cqt)?),
        }
    }

    fn resolve(&mut self, base: &Path) {
        if let DataSource::Manifest { path, .. } = self {
            *path = resolve(base, path);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Tracks for self-supervised epochs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unlabeled: Option<DataSource>,
    /// Tracks for supervised epochs; subsampled by `train.label_fraction`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeled: Option<DataSource>,
    /// Held-out tracks evaluated after training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<DataSource>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// C major recording; the bundled synthetic clip when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<PathBuf>,
}

/// Everything `stone train` needs, read from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
    /// Network layout; the desk layout for the training mode when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chromanet: Option<ChromaNetConfig>,
    #[serde(default)]
    pub cqt: CqtParams,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    /// Keep a numbered checkpoint every this many epochs (0: only the latest).
    #[serde(default)]
    pub checkpoint_every: usize,
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, source: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::ConfigParse {
            path: source.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Read a config file; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.run_dir = resolve(base, &self.run_dir);
        for source in [&mut self.data.unlabeled, &mut self.data.labeled, &mut self.data.eval]
            .into_iter()
            .flatten()
        {
            source.resolve(base);
        }
        if let Some(clip) = &mut self.calibration.clip {
            *clip = resolve(base, clip);
        }
    }

    pub fn network(&self) -> ChromaNetConfig {
        self.chromanet
            .clone()
            .unwrap_or_else(|| ChromaNetConfig::desk(self.train.mode.out_channels()))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.cqt.validate()?;
        let net = self.network();
        net.validate()?;
        if net.out_channels != self.train.mode.out_channels() {
            return Err(CliError::Config(format!(
                "mode {:?} needs chromanet.out_channels = {}",
                self.train.mode,
                self.train.mode.out_channels()
            )));
        }
        if self.train.mode.needs_unlabeled() && self.data.unlabeled.is_none() {
            return Err(CliError::Config(format!("mode {:?} needs data.unlabeled", self.train.mode)));
        }
        if self.train.mode.needs_labeled() && self.data.labeled.is_none() {
            return Err(CliError::Config(format!("mode {:?} needs data.labeled", self.train.mode)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }
}
