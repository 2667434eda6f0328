use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetManifest;
use crate::error::{Result, StoneError};

/// Number of items kept when subsampling `n` items by `fraction` (round half up).
pub fn subsample_size(n: usize, fraction: f64) -> usize {
    (fraction * n as f64 + 0.5).floor() as usize
}

/// Uniformly random subset of the labeled entries, reproducible under `seed`.
/// Entry order is preserved; unlabeled entries are dropped.
pub fn subsample_labels(
    manifest: &DatasetManifest,
    fraction: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(StoneError::Config(format!(
            "label fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let labeled = manifest.filtered(|e| e.key.is_some());
    let n = labeled.len();
    let keep = subsample_size(n, fraction);
    if keep == 0 {
        return Err(StoneError::EmptySubsample { fraction, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, n, keep).into_vec();
    chosen.sort_unstable();
    Ok(DatasetManifest {
        entries: chosen
            .into_iter()
            .map(|i| labeled.entries[i].clone())
            .collect(),
        ..labeled
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{KeyLabel, ManifestEntry};
    use std::path::PathBuf;

    fn corpus(n: usize) -> DatasetManifest {
        let entries = (0..n)
            .map(|i| ManifestEntry {
                path: PathBuf::from(format!("{i}.wav")),
                key: Some(KeyLabel::from_index(i % 24)),
                split: "train".into(),
            })
            .collect();
        DatasetManifest::new("c", "/", entries).unwrap()
    }

    #[test]
    fn sizes() {
        assert_eq!(subsample_size(1159, 0.1), 116);
        assert_eq!(subsample_size(1159, 0.01), 12);
        assert_eq!(subsample_size(10, 0.25), 3);
        let m = corpus(1159);
        assert_eq!(subsample_labels(&m, 0.1, 1).unwrap().len(), 116);
        assert_eq!(subsample_labels(&m, 0.01, 1).unwrap().len(), 12);
    }

    #[test]
    fn identity_and_reproducibility() {
        let m = corpus(50);
        assert_eq!(subsample_labels(&m, 1.0, 3).unwrap().entries, m.entries);
        let a = subsample_labels(&m, 0.3, 9).unwrap();
        let b = subsample_labels(&m, 0.3, 9).unwrap();
        assert_eq!(a.entries, b.entries);
        let c = subsample_labels(&m, 0.3, 10).unwrap();
        assert_ne!(a.entries, c.entries);
    }

    #[test]
    fn errors() {
        let m = corpus(10);
        assert!(matches!(
            subsample_labels(&m, 0.01, 0),
            Err(StoneError::EmptySubsample { .. })
        ));
        assert!(subsample_labels(&m, 0.0, 0).is_err());
        assert!(subsample_labels(&m, 1.5, 0).is_err());
    }
}
