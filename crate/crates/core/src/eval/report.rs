use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{key_category, signature_category, EvalCounts, FifthRule, KeyPrediction};
use crate::datasets::KeyLabel;
use crate::error::{Result, StoneError};

/// One evaluated track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackResult {
    pub id: String,
    pub reference: String,
    pub prediction: String,
    pub category: String,
}

/// Aggregate scores of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub system: String,
    pub n_tracks: usize,
    pub ksea: f64,
    pub signature_counts: EvalCounts,
    /// Present for predictions that carry a mode.
    pub mirex: Option<f64>,
    pub key_counts: Option<EvalCounts>,
    /// Entropy in bits of the predicted-class histogram.
    pub prediction_entropy: f64,
}

pub struct EvalReport {
    pub summary: EvalSummary,
    pub tracks: Vec<TrackResult>,
}

/// Shannon entropy (bits) of the histogram of `classes`.
pub fn histogram_entropy(classes: impl IntoIterator<Item = usize>) -> f64 {
    let mut counts = std::collections::BTreeMap::new();
    let mut n = 0usize;
    for c in classes {
        *counts.entry(c).or_insert(0usize) += 1;
        n += 1;
    }
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n as f64;
            p * (1.0 / p).log2()
        })
        .sum()
}

fn prediction_name(p: &KeyPrediction) -> String {
    match p.key() {
        Some(k) => k.to_string(),
        None => format!("sig:{}", p.signature),
    }
}

impl EvalReport {
    pub fn build(
        system: &str,
        ids: &[String],
        preds: &[KeyPrediction],
        refs: &[KeyLabel],
        rule: FifthRule,
    ) -> Result<Self> {
        if ids.len() != preds.len() || preds.len() != refs.len() {
            return Err(StoneError::LengthMismatch {
                predictions: preds.len(),
                references: refs.len(),
            });
        }
        let (ksea, signature_counts) = super::ksea(preds, refs)?;
        let with_mode = preds.iter().all(|p| p.mode.is_some());
        let (mirex, key_counts) = if with_mode && !preds.is_empty() {
            let (score, counts) = super::mirex_score(preds, refs, rule)?;
            (Some(score), Some(counts))
        } else {
            (None, None)
        };
        let tracks = ids
            .iter()
            .zip(preds.iter().zip(refs))
            .map(|(id, (p, r))| {
                let category = match p.key() {
                    Some(k) => key_category(k, *r, rule),
                    None => signature_category(p.signature, r.key_signature()),
                };
                TrackResult {
                    id: id.clone(),
                    reference: r.to_string(),
                    prediction: prediction_name(p),
                    category: category.as_str().to_string(),
                }
            })
            .collect();
        let entropy = if with_mode {
            histogram_entropy(preds.iter().filter_map(|p| p.key()).map(|k| k.index()))
        } else {
            histogram_entropy(preds.iter().map(|p| p.signature))
        };
        Ok(EvalReport {
            summary: EvalSummary {
                system: system.to_string(),
                n_tracks: preds.len(),
                ksea,
                signature_counts,
                mirex,
                key_counts,
                prediction_entropy: entropy,
            },
            tracks,
        })
    }

    /// Writes `<stem>.csv` (per track) and `<stem>.json` (summary) into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| StoneError::io(dir, e))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&csv_path)?;
        for t in &self.tracks {
            w.serialize(t)?;
        }
        w.flush().map_err(|e| StoneError::io(&csv_path, e))?;
        let json_path = dir.join(format!("{stem}.json"));
        let json = serde_json::to_string_pretty(&self.summary)?;
        std::fs::write(&json_path, json).map_err(|e| StoneError::io(&json_path, e))
    }
}

/// Convenience for log lines.
pub fn describe(summary: &EvalSummary) -> String {
    let mut s = format!(
        "{}: KSEA {:.1}% over {} tracks",
        summary.system,
        100.0 * summary.ksea,
        summary.n_tracks
    );
    if let Some(m) = summary.mirex {
        s.push_str(&format!(", MIREX {:.1}%", 100.0 * m));
    }
    s.push_str(&format!(", entropy {:.2} bits", summary.prediction_entropy));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_examples() {
        assert_eq!(histogram_entropy(vec![3; 100]), 0.0);
        let uniform = histogram_entropy((0..1200).map(|i| i % 12));
        assert!((uniform - 12f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn report_round_trip() {
        let refs: Vec<KeyLabel> = KeyLabel::all().collect();
        let preds: Vec<KeyPrediction> = refs
            .iter()
            .map(|&k| KeyPrediction::from_key(k, vec![]))
            .collect();
        let ids: Vec<String> = (0..24).map(|i| format!("t{i}")).collect();
        let report = EvalReport::build("oracle", &ids, &preds, &refs, FifthRule::Above).unwrap();
        assert_eq!(report.summary.mirex, Some(1.0));
        let dir = tempfile::tempdir().unwrap();
        report.write(dir.path(), "eval").unwrap();
        let text = std::fs::read_to_string(dir.path().join("eval.csv")).unwrap();
        assert!(text.starts_with("id,reference,prediction,category"));
        assert!(dir.path().join("eval.json").exists());
    }
}
