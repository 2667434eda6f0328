use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KeyPrediction;
use crate::chromanet::argmax;
use crate::datasets::{KeyLabel, Mode};
use crate::error::{Result, StoneError};
use crate::frontend::CqtMatrix;

const BUNDLED_PROFILES: &str = include_str!("../../data/krumhansl_profiles.json");

/// Major and minor key profiles indexed from the tonic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyProfiles {
    #[serde(default)]
    pub source: String,
    pub major: [f64; 12],
    pub minor: [f64; 12],
}

impl KeyProfiles {
    /// The Krumhansl-Kessler profiles shipped with the crate.
    pub fn krumhansl() -> Self {
        serde_json::from_str(BUNDLED_PROFILES).expect("bundled key profiles are valid JSON")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| StoneError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn profile(&self, mode: Mode) -> &[f64; 12] {
        match mode {
            Mode::Major => &self.major,
            Mode::Minor => &self.minor,
        }
    }
}

/// Pearson correlation; zero when either side has no variance.
fn correlation(a: &[f64; 12], b: &[f64; 12]) -> f64 {
    let mean = |v: &[f64; 12]| v.iter().sum::<f64>() / 12.0;
    let (ma, mb) = (mean(a), mean(b));
    let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
    for i in 0..12 {
        let (da, db) = (a[i] - ma, b[i] - mb);
        num += da * db;
        va += da * da;
        vb += db * db;
    }
    let denom = (va * vb).sqrt();
    if denom < 1e-12 {
        0.0
    } else {
        num / denom
    }
}

/// Correlations with the 24 rotated profiles, indexed by [`KeyLabel::index`].
pub fn template_scores(chroma: &[f64; 12], profiles: &KeyProfiles) -> Vec<f64> {
    KeyLabel::all()
        .map(|key| {
            let p = profiles.profile(key.mode());
            let rotated: [f64; 12] = std::array::from_fn(|q| p[(q + 12 - key.tonic()) % 12]);
            correlation(chroma, &rotated)
        })
        .collect()
}

/// Pitch class of greatest time-averaged energy, read as a key signature.
pub fn baseline_chroma_argmax(x: &CqtMatrix, log_gain: f64) -> KeyPrediction {
    let chroma = x.chroma_energy(log_gain);
    KeyPrediction::from_signature(argmax(&chroma), chroma.to_vec())
}

/// Key whose rotated profile correlates best with the averaged chroma.
pub fn baseline_template_matching(
    x: &CqtMatrix,
    log_gain: f64,
    profiles: &KeyProfiles,
) -> KeyPrediction {
    template_from_chroma(&x.chroma_energy(log_gain), profiles)
}

pub fn template_from_chroma(chroma: &[f64; 12], profiles: &KeyProfiles) -> KeyPrediction {
    let scores = template_scores(chroma, profiles);
    let key = KeyLabel::from_index(argmax(&scores));
    KeyPrediction::from_key(key, scores)
}
