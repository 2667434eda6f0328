use rayon::prelude::*;

use super::data::Corpus;
use crate::chromanet::{structured_from_logits, ChromaNet, Ksp, RunningStats};
use crate::datasets::KeyLabel;
use crate::error::{Result, StoneError};
use crate::eval::{
    calibrate, decode_key, histogram_entropy, CalibrationState, KeyPrediction, Scores,
};
use crate::frontend::{
    compute_cqt, crop_shift_to_interval, transpose_crop, AudioClip, CqtMatrix, CqtParams,
};

/// Probe sets smaller than this give unreliable collapse scores.
pub const MIN_PROBE_ITEMS: usize = 100;
/// Prediction entropy (bits) below which a model counts as collapsed.
pub const COLLAPSE_THRESHOLD_BITS: f64 = 1.0;

/// A trained network applied to whole tracks.
#[derive(Debug, Clone)]
pub struct Estimator {
    net: ChromaNet,
    params: Vec<f32>,
    stats: Option<RunningStats>,
    crop: usize,
    /// Inference window in frames, normally the training segment length.
    window: usize,
    cqt: CqtParams,
    pub calibration: CalibrationState,
}

impl Estimator {
    pub fn new(
        net: ChromaNet,
        params: Vec<f32>,
        stats: Option<RunningStats>,
        crop: usize,
        window: usize,
        cqt: CqtParams,
    ) -> Self {
        Estimator {
            net,
            params,
            stats,
            crop,
            window: window.max(1),
            cqt,
            calibration: CalibrationState::identity(),
        }
    }

    pub fn with_calibration(mut self, calibration: CalibrationState) -> Self {
        self.calibration = calibration;
        self
    }

    pub fn cqt_params(&self) -> &CqtParams {
        &self.cqt
    }

    /// Uncalibrated model output for one track, rolled back by the crop so that
    /// chroma indices refer to the untransposed input.
    ///
    /// Tracks longer than the window are cut into windows (the last one aligned
    /// to the end) whose backbone features are averaged.
    pub fn scores(&self, x: &CqtMatrix) -> Result<Scores> {
        let features = self.features(x)?;
        let logits = self.net.logits(&self.params, &features);
        let scores = if self.net.out_channels() == 1 {
            Scores::Ksp(Ksp::softmax(&logits))
        } else {
            let stats = self
                .stats
                .as_ref()
                .ok_or(StoneError::NormalizationMissing)?;
            Scores::Structured(structured_from_logits(&logits, stats)?)
        };
        Ok(undo_crop(scores, self.crop))
    }

    fn features(&self, x: &CqtMatrix) -> Result<Vec<f32>> {
        let n = x.n_frames();
        if n <= self.window {
            return Ok(self.net.forward(&self.params, &transpose_crop(x, self.crop as i64)?)?.0);
        }
        let starts: Vec<usize> = (0..n.div_ceil(self.window))
            .map(|i| (i * self.window).min(n - self.window))
            .collect();
        let mut sum = vec![0.0f32; self.net.feature_len()];
        for &start in &starts {
            let cropped = transpose_crop(&x.slice_frames(start, self.window), self.crop as i64)?;
            for (acc, v) in sum.iter_mut().zip(self.net.forward(&self.params, &cropped)?.0) {
                *acc += v;
            }
        }
        let inv = 1.0 / starts.len() as f32;
        Ok(sum.into_iter().map(|v| v * inv).collect())
    }

    pub fn predict(&self, x: &CqtMatrix) -> Result<KeyPrediction> {
        Ok(decode_key(&self.scores(x)?, &self.calibration))
    }

    /// Calibrate on a C major recording and keep the result.
    pub fn calibrate_clip(&mut self, clip: &AudioClip) -> Result<CalibrationState> {
        let clip = if clip.sample_rate == self.cqt.sample_rate {
            clip.clone()
        } else {
            clip.resample(self.cqt.sample_rate)?
        };
        let scores = self.scores(&compute_cqt(&clip, &self.cqt)?)?;
        self.calibration = calibrate(&scores)?;
        Ok(self.calibration)
    }

    /// Calibrated predictions for every labeled track: ids, predictions, references.
    pub fn evaluate(
        &self,
        corpus: &Corpus,
    ) -> Result<(Vec<String>, Vec<KeyPrediction>, Vec<KeyLabel>)> {
        let rows = corpus
            .tracks
            .par_iter()
            .filter_map(|t| t.key.map(|k| (t, k)))
            .map(|(t, k)| Ok((t.id.clone(), self.predict(&t.cqt)?, k)))
            .collect::<Result<Vec<_>>>()?;
        let mut ids = Vec::with_capacity(rows.len());
        let mut preds = Vec::with_capacity(rows.len());
        let mut refs = Vec::with_capacity(rows.len());
        for (id, p, k) in rows {
            ids.push(id);
            preds.push(p);
            refs.push(k);
        }
        Ok((ids, preds, refs))
    }

    /// Entropy (bits) of the raw argmax class over a probe set.
    pub fn collapse_entropy(&self, probe: &Corpus) -> Result<f64> {
        if probe.len() < MIN_PROBE_ITEMS {
            return Err(StoneError::EmptyDataset(format!(
                "collapse probe needs at least {MIN_PROBE_ITEMS} tracks, got {}",
                probe.len()
            )));
        }
        let classes = probe
            .tracks
            .par_iter()
            .map(|t| {
                Ok(match self.scores(&t.cqt)? {
                    Scores::Ksp(y) => y.argmax(),
                    Scores::Structured(y) => {
                        let (q, m) = y.argmax();
                        2 * q + m
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(histogram_entropy(classes))
    }
}

fn undo_crop(scores: Scores, crop: usize) -> Scores {
    let k = -crop_shift_to_interval(crop as i64);
    match scores {
        Scores::Ksp(y) => Scores::Ksp(y.roll(k)),
        Scores::Structured(y) => Scores::Structured(y.roll_rows(k)),
    }
}

/// Whether an entropy score flags a collapsed model.
pub fn is_collapsed(entropy_bits: f64) -> bool {
    entropy_bits < COLLAPSE_THRESHOLD_BITS
}
