use std::fmt::Write as _;
use std::path::Path;

use super::KeyPrediction;
use crate::datasets::{KeyLabel, Mode};
use crate::error::{Result, StoneError};

const NOTE_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

/// Key signatures in circle-of-fifths order starting from C.
pub fn cof_signatures() -> [usize; 12] {
    std::array::from_fn(|i| (7 * i) % 12)
}

/// Keys in circle-of-fifths order, each major key followed by its relative minor.
pub fn cof_keys() -> Vec<KeyLabel> {
    cof_signatures()
        .iter()
        .flat_map(|&q| {
            [
                KeyLabel::from_signature(q, Mode::Major),
                KeyLabel::from_signature(q, Mode::Minor),
            ]
        })
        .collect()
}

/// Reference-by-prediction counts with axes in circle-of-fifths order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `counts[reference][prediction]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// 12x12 matrix over key signatures.
    pub fn signatures(preds: &[KeyPrediction], refs: &[KeyLabel]) -> Result<Self> {
        check(preds, refs)?;
        let order = cof_signatures();
        let pos = |q: usize| order.iter().position(|&o| o == q).unwrap_or(0);
        let mut counts = vec![vec![0u64; 12]; 12];
        for (p, r) in preds.iter().zip(refs) {
            counts[pos(r.key_signature())][pos(p.signature)] += 1;
        }
        let labels = order.iter().map(|&q| NOTE_NAMES[q].to_string()).collect();
        Ok(ConfusionMatrix { labels, counts })
    }

    /// 24x24 matrix over keys; predictions must carry a mode.
    pub fn keys(preds: &[KeyPrediction], refs: &[KeyLabel]) -> Result<Self> {
        check(preds, refs)?;
        let order = cof_keys();
        let pos = |k: KeyLabel| order.iter().position(|&o| o == k).unwrap_or(0);
        let mut counts = vec![vec![0u64; 24]; 24];
        for (p, r) in preds.iter().zip(refs) {
            let key = p
                .key()
                .ok_or_else(|| StoneError::Shape("key confusion needs a predicted mode".into()))?;
            counts[pos(*r)][pos(key)] += 1;
        }
        let labels = order.iter().map(|k| k.to_string()).collect();
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Rows scaled to sum to one; empty rows stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| {
                        if total == 0 {
                            0.0
                        } else {
                            c as f64 / total as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["reference".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(self.normalized()) {
            let mut record = vec![label.clone()];
            record.extend(row.iter().map(|v| format!("{v:.4}")));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| StoneError::io(path, e))?;
        Ok(())
    }

    /// Heat map of the row-normalized matrix.
    pub fn to_svg(&self) -> String {
        let n = self.labels.len();
        let cell = 18.0;
        let margin = 60.0;
        let size = margin + cell * n as f64 + 10.0;
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="9">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for (i, row) in self.normalized().iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let shade = (255.0 * (1.0 - v)).round() as u8;
                let _ = writeln!(
                    svg,
                    r##"<rect x="{:.1}" y="{:.1}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="#ddd" stroke-width="0.5"/>"##,
                    margin + j as f64 * cell,
                    margin + i as f64 * cell,
                );
            }
        }
        for (i, label) in self.labels.iter().enumerate() {
            let offset = margin + (i as f64 + 0.7) * cell;
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{offset:.1}" text-anchor="end">{label}</text>"#,
                margin - 4.0
            );
            let _ = writeln!(
                svg,
                r#"<text transform="translate({offset:.1},{:.1}) rotate(-90)">{label}</text>"#,
                margin - 4.0
            );
        }
        svg.push_str("</svg>\n");
        svg
    }

    pub fn write_svg(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_svg()).map_err(|e| StoneError::io(path, e))
    }
}

fn check(preds: &[KeyPrediction], refs: &[KeyLabel]) -> Result<()> {
    if preds.len() != refs.len() {
        return Err(StoneError::LengthMismatch {
            predictions: preds.len(),
            references: refs.len(),
        });
    }
    Ok(())
}
