use serde::{Deserialize, Serialize};

use crate::error::{Result, StoneError};
use crate::objectives::CofFrequency;

/// Training regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Self-supervised, 12-class key signature profiles.
    Ssl12,
    /// Self-supervised, 24-class key/mode matrices.
    Ssl24,
    /// Supervised only, with oracle responses for segment B.
    Supervised,
    /// SSL and supervised epochs in strict alternation, SSL first.
    Alternating,
}

impl TrainMode {
    pub fn out_channels(self) -> usize {
        match self {
            TrainMode::Ssl12 => 1,
            _ => 2,
        }
    }

    pub fn needs_unlabeled(self) -> bool {
        matches!(
            self,
            TrainMode::Ssl12 | TrainMode::Ssl24 | TrainMode::Alternating
        )
    }

    pub fn needs_labeled(self) -> bool {
        matches!(self, TrainMode::Supervised | TrainMode::Alternating)
    }

    /// Kind of epoch `epoch` (0-based).
    pub fn epoch_kind(self, epoch: usize) -> EpochKind {
        match self {
            TrainMode::Ssl12 | TrainMode::Ssl24 => EpochKind::Ssl,
            TrainMode::Supervised => EpochKind::Supervised,
            TrainMode::Alternating if epoch % 2 == 0 => EpochKind::Ssl,
            TrainMode::Alternating => EpochKind::Supervised,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpochKind {
    Ssl,
    Supervised,
}

/// Loss replacing the three CPSD terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Cpsd,
    /// Pseudo-label cross-entropy (ablation, 12-class only).
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub objective: Objective,
    /// DFT frequency of the CPSD terms: 7 (fifths) or 1 (semitones).
    pub omega: CofFrequency,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Share of all steps spent in linear warmup.
    pub warmup_fraction: f64,
    pub segment_seconds: f64,
    pub seed: u64,
    /// Share of labeled tracks kept for supervised epochs.
    pub label_fraction: f64,
    /// Crop used when running the trained model on whole tracks.
    pub eval_crop: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Ssl24,
            objective: Objective::Cpsd,
            omega: CofFrequency::FIFTHS,
            epochs: 30,
            batch_size: 16,
            lr: 1e-3,
            weight_decay: 0.01,
            warmup_fraction: 0.05,
            segment_seconds: 4.0,
            seed: 0,
            label_fraction: 1.0,
            eval_crop: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(StoneError::Config(format!("train: {m}")));
        if ![1, 7].contains(&self.omega.get()) {
            return fail(format!("omega must be 1 or 7, got {}", self.omega.get()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be positive".into());
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 {
            return fail("lr must be positive and weight_decay nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return fail("warmup_fraction must lie in [0, 1)".into());
        }
        if !(self.segment_seconds > 0.0) {
            return fail("segment_seconds must be positive".into());
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return fail("label_fraction must lie in (0, 1]".into());
        }
        if self.eval_crop > crate::frontend::MAX_CROP {
            return fail(format!(
                "eval_crop must be at most {}",
                crate::frontend::MAX_CROP
            ));
        }
        if self.objective == Objective::CrossEntropy && self.mode != TrainMode::Ssl12 {
            return fail("the cross-entropy objective applies to ssl12 only".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternation_parity() {
        let kinds: Vec<EpochKind> = (0..4)
            .map(|e| TrainMode::Alternating.epoch_kind(e))
            .collect();
        assert_eq!(
            kinds,
            [
                EpochKind::Ssl,
                EpochKind::Supervised,
                EpochKind::Ssl,
                EpochKind::Supervised
            ]
        );
        for e in 0..50 {
            assert_eq!(
                TrainMode::Alternating.epoch_kind(e) == EpochKind::Ssl,
                e % 2 == 0
            );
        }
    }

    #[test]
    fn validation() {
        TrainConfig::default().validate().unwrap();
        let cfg = TrainConfig {
            omega: CofFrequency::new(5).unwrap(),
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            objective: Objective::CrossEntropy,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(toml::from_str::<TrainConfig>("omega = 6").is_err());
        assert!(toml::from_str::<TrainConfig>("bogus = 1").is_err());
        let parsed: TrainConfig = toml::from_str("mode = \"alternating\"\nomega = 1").unwrap();
        assert_eq!(parsed.mode, TrainMode::Alternating);
    }
}
