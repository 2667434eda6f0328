use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Estimator, TrainConfig, TrainState, Trainer};
use crate::chromanet::{ChromaNet, ChromaNetConfig};
use crate::error::{Result, StoneError};
use crate::eval::CalibrationState;
use crate::frontend::CqtParams;

pub const CHECKPOINT_SCHEMA: &str = "stone-checkpoint/v1";

/// Serializes `f32` vectors through `f64` so JSON round trips are exact.
pub mod f32_as_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f32], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|&x| x as f64)
            .collect::<Vec<f64>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f32>, D::Error> {
        Ok(Vec::<f64>::deserialize(d)?
            .into_iter()
            .map(|x| x as f32)
            .collect())
    }
}

/// Versioned bundle of configuration, weights and training state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: String,
    pub chromanet: ChromaNetConfig,
    pub cqt: CqtParams,
    pub train: TrainConfig,
    pub state: TrainState,
    pub calibration: Option<CalibrationState>,
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer) -> Self {
        Checkpoint {
            schema: CHECKPOINT_SCHEMA.to_string(),
            chromanet: trainer.net().config().clone(),
            cqt: trainer.cqt_params().clone(),
            train: trainer.config().clone(),
            state: trainer.state.clone(),
            calibration: None,
        }
    }

    pub fn trainer(&self) -> Result<Trainer> {
        Trainer::from_parts(&self.chromanet, &self.train, &self.cqt, self.state.clone())
    }

    /// Calibrated (when available) estimator from the stored weights.
    pub fn estimator(&self) -> Result<Estimator> {
        let net = ChromaNet::new(&self.chromanet)?;
        let stats = (self.chromanet.out_channels == 2).then(|| self.state.stats.clone());
        Ok(Estimator::new(
            net,
            self.state.params.clone(),
            stats,
            self.train.eval_crop,
            self.cqt.frames_for(self.train.segment_seconds),
            self.cqt.clone(),
        )
        .with_calibration(self.calibration.unwrap_or_default()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("schema").and_then(|s| s.as_str()) {
            Some(CHECKPOINT_SCHEMA) => {}
            Some(other) => {
                return Err(StoneError::Checkpoint(format!(
                    "unsupported schema {other}, expected {CHECKPOINT_SCHEMA}"
                )))
            }
            None => return Err(StoneError::Checkpoint("missing schema tag".into())),
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| StoneError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| StoneError::io(path, e))?;
        Self::from_json(&text)
    }
}
