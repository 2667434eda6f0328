use serde::{Deserialize, Serialize};

use super::KeyPrediction;
use crate::datasets::{KeyLabel, Mode};
use crate::error::{Result, StoneError};

/// MIREX category weights: correct, fifth, relative, parallel.
pub const MIREX_WEIGHTS: [f64; 4] = [1.0, 0.5, 0.3, 0.2];

/// Outcome category of one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Correct,
    Fifth,
    Relative,
    Parallel,
    Wrong,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Correct => "correct",
            Category::Fifth => "fifth",
            Category::Relative => "relative",
            Category::Parallel => "parallel",
            Category::Wrong => "wrong",
        }
    }
}

/// Which tonic displacements the MIREX "fifth" category accepts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FifthRule {
    /// Estimated tonic a fifth above the reference (mir_eval).
    #[default]
    Above,
    /// A fifth above or below.
    Both,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub correct: u64,
    pub fifth: u64,
    pub relative: u64,
    pub parallel: u64,
    pub wrong: u64,
    pub n_total: u64,
}

impl EvalCounts {
    pub fn add(&mut self, category: Category) {
        match category {
            Category::Correct => self.correct += 1,
            Category::Fifth => self.fifth += 1,
            Category::Relative => self.relative += 1,
            Category::Parallel => self.parallel += 1,
            Category::Wrong => self.wrong += 1,
        }
        self.n_total += 1;
    }

    /// KSEA in [0, 1]: `(correct + fifth / 2) / n`.
    pub fn ksea(&self) -> f64 {
        if self.n_total == 0 {
            return 0.0;
        }
        (self.correct as f64 + 0.5 * self.fifth as f64) / self.n_total as f64
    }

    /// Weighted MIREX score in [0, 1].
    pub fn mirex(&self) -> f64 {
        if self.n_total == 0 {
            return 0.0;
        }
        let [c, f, r, p] = MIREX_WEIGHTS;
        (c * self.correct as f64
            + f * self.fifth as f64
            + r * self.relative as f64
            + p * self.parallel as f64)
            / self.n_total as f64
    }

    /// Counts for a 12-class table: the remainder of `n_total` is wrong.
    pub fn signature_counts(correct: u64, fifth: u64, n_total: u64) -> Self {
        EvalCounts {
            correct,
            fifth,
            wrong: n_total - correct - fifth,
            n_total,
            ..Default::default()
        }
    }

    /// Counts for a 24-class table.
    pub fn key_counts(correct: u64, fifth: u64, relative: u64, parallel: u64, wrong: u64) -> Self {
        EvalCounts {
            correct,
            fifth,
            relative,
            parallel,
            wrong,
            n_total: correct + fifth + relative + parallel + wrong,
        }
    }
}

/// Key-signature category: correct, fifth (either direction) or wrong.
pub fn signature_category(predicted: usize, reference: usize) -> Category {
    match (predicted + 12 - reference % 12) % 12 {
        0 => Category::Correct,
        5 | 7 => Category::Fifth,
        _ => Category::Wrong,
    }
}

/// MIREX category of a full key estimate.
pub fn key_category(predicted: KeyLabel, reference: KeyLabel, rule: FifthRule) -> Category {
    let diff = (predicted.tonic() + 12 - reference.tonic()) % 12;
    let same_mode = predicted.mode() == reference.mode();
    if same_mode && diff == 0 {
        Category::Correct
    } else if same_mode && (diff == 7 || (rule == FifthRule::Both && diff == 5)) {
        Category::Fifth
    } else if predicted == reference.relative() {
        Category::Relative
    } else if diff == 0 {
        Category::Parallel
    } else {
        Category::Wrong
    }
}

fn check_lengths(p: usize, r: usize) -> Result<()> {
    if p != r {
        return Err(StoneError::LengthMismatch {
            predictions: p,
            references: r,
        });
    }
    Ok(())
}

/// Key signature estimation accuracy; mode is ignored.
pub fn ksea(preds: &[KeyPrediction], refs: &[KeyLabel]) -> Result<(f64, EvalCounts)> {
    check_lengths(preds.len(), refs.len())?;
    let mut counts = EvalCounts::default();
    for (p, r) in preds.iter().zip(refs) {
        counts.add(signature_category(p.signature, r.key_signature()));
    }
    Ok((counts.ksea(), counts))
}

/// Weighted MIREX score of 24-class predictions.
pub fn mirex_score(
    preds: &[KeyPrediction],
    refs: &[KeyLabel],
    rule: FifthRule,
) -> Result<(f64, EvalCounts)> {
    check_lengths(preds.len(), refs.len())?;
    let mut counts = EvalCounts::default();
    for (p, r) in preds.iter().zip(refs) {
        let key = p
            .key()
            .ok_or_else(|| StoneError::Shape("MIREX scoring needs a predicted mode".into()))?;
        counts.add(key_category(key, *r, rule));
    }
    Ok((counts.mirex(), counts))
}

/// Mode index helper for report columns.
pub fn mode_name(mode: Option<Mode>) -> &'static str {
    match mode {
        Some(Mode::Major) => "major",
        Some(Mode::Minor) => "minor",
        None => "",
    }
}
