//! Output heads: the octave-equivalence operator, the 12x2 structured head
//! with frozen batch statistics, its marginals, and the dense ablation head.

use serde::{Deserialize, Serialize};

use super::model::{octave_sums, CHROMAS};
use crate::error::{Result, StoneError};
use crate::frontend::CROPPED_BINS;

const SUM_TOLERANCE: f64 = 1e-6;
pub const BATCH_NORM_EPS: f64 = 1e-5;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Gradient of a softmax given its output and the upstream gradient.
pub fn softmax_backward(probs: &[f64], grad: &[f64]) -> Vec<f64> {
    let inner: f64 = probs.iter().zip(grad).map(|(p, g)| p * g).sum();
    probs
        .iter()
        .zip(grad)
        .map(|(p, g)| p * (g - inner))
        .collect()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_distribution(values: &[f64], what: &str) -> Result<()> {
    let total: f64 = values.iter().sum();
    if values.iter().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(StoneError::Shape(format!(
            "{what} must be nonnegative and sum to 1 (sum = {total})"
        )));
    }
    Ok(())
}

/// Key signature profile: a distribution over the 12 chromas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ksp([f64; CHROMAS]);

impl Ksp {
    pub fn new(values: [f64; CHROMAS]) -> Result<Self> {
        check_distribution(&values, "key signature profile")?;
        Ok(Ksp(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; CHROMAS] = values.try_into().map_err(|_| {
            StoneError::Shape(format!("expected {CHROMAS} values, got {}", values.len()))
        })?;
        Ksp::new(arr)
    }

    pub fn softmax(logits: &[f64]) -> Self {
        let p = softmax(logits);
        Ksp(p.try_into().expect("12 logits"))
    }

    pub fn one_hot(q: usize) -> Self {
        let mut v = [0.0; CHROMAS];
        v[q % CHROMAS] = 1.0;
        Ksp(v)
    }

    pub fn uniform() -> Self {
        Ksp([1.0 / CHROMAS as f64; CHROMAS])
    }

    pub fn values(&self) -> &[f64; CHROMAS] {
        &self.0
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Circular shift moving entry `q` to `q + k`.
    pub fn roll(&self, k: i64) -> Ksp {
        let mut out = [0.0; CHROMAS];
        for (q, &v) in self.0.iter().enumerate() {
            out[(q as i64 + k).rem_euclid(CHROMAS as i64) as usize] = v;
        }
        Ksp(out)
    }
}

/// Mode distribution `(major-channel, minor-channel)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeVector([f64; 2]);

impl ModeVector {
    pub fn new(values: [f64; 2]) -> Result<Self> {
        check_distribution(&values, "mode vector")?;
        Ok(ModeVector(values))
    }

    pub fn one_hot(m: usize) -> Self {
        let mut v = [0.0; 2];
        v[m.min(1)] = 1.0;
        ModeVector(v)
    }

    pub fn uniform() -> Self {
        ModeVector([0.5, 0.5])
    }

    pub fn values(&self) -> &[f64; 2] {
        &self.0
    }
}

/// 12x2 joint distribution over key signature (rows) and mode (columns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyModeMatrix([[f64; 2]; CHROMAS]);

impl KeyModeMatrix {
    pub fn new(values: [[f64; 2]; CHROMAS]) -> Result<Self> {
        check_distribution(values.as_flattened(), "key/mode matrix")?;
        Ok(KeyModeMatrix(values))
    }

    /// Softmax over 24 logits given channel-major (`m * 12 + q`).
    pub fn softmax(logits: &[f64]) -> Self {
        let p = softmax(logits);
        let mut v = [[0.0; 2]; CHROMAS];
        for (q, row) in v.iter_mut().enumerate() {
            row[0] = p[q];
            row[1] = p[CHROMAS + q];
        }
        KeyModeMatrix(v)
    }

    pub fn one_hot(q: usize, m: usize) -> Self {
        let mut v = [[0.0; 2]; CHROMAS];
        v[q % CHROMAS][m.min(1)] = 1.0;
        KeyModeMatrix(v)
    }

    pub fn uniform() -> Self {
        KeyModeMatrix([[1.0 / 24.0; 2]; CHROMAS])
    }

    pub fn get(&self, q: usize, m: usize) -> f64 {
        self.0[q][m]
    }

    pub fn rows(&self) -> &[[f64; 2]; CHROMAS] {
        &self.0
    }

    /// Channel-major flattening, the inverse of [`Self::softmax`]'s layout.
    pub fn channel_major(&self) -> Vec<f64> {
        (0..2)
            .flat_map(|m| self.0.iter().map(move |r| r[m]))
            .collect()
    }

    /// Argmax `(q, m)` scanning rows first; ties go to the lowest `(q, m)`.
    pub fn argmax(&self) -> (usize, usize) {
        let flat = self.0.as_flattened();
        let i = argmax(flat);
        (i / 2, i % 2)
    }

    /// Circular row shift moving row `q` to `q + k`.
    pub fn roll_rows(&self, k: i64) -> KeyModeMatrix {
        let mut out = [[0.0; 2]; CHROMAS];
        for (q, row) in self.0.iter().enumerate() {
            out[(q as i64 + k).rem_euclid(CHROMAS as i64) as usize] = *row;
        }
        KeyModeMatrix(out)
    }

    pub fn swap_modes(&self) -> KeyModeMatrix {
        let mut out = self.0;
        for row in &mut out {
            row.swap(0, 1);
        }
        KeyModeMatrix(out)
    }
}

/// Row sums: the key signature profile of a structured output.
pub fn lambda_of(y: &KeyModeMatrix) -> Ksp {
    let mut v = [0.0; CHROMAS];
    for (q, row) in y.0.iter().enumerate() {
        v[q] = row[0] + row[1];
    }
    Ksp(v)
}

/// Column sums: the pitch-invariant mode estimate.
pub fn mu_of(y: &KeyModeMatrix) -> ModeVector {
    let mut v = [0.0; 2];
    for row in &y.0 {
        v[0] += row[0];
        v[1] += row[1];
    }
    ModeVector(v)
}

/// Octave equivalence: sum the 84 features over octaves, then softmax.
pub fn octave_pool_g(v: &[f64]) -> Result<Ksp> {
    if v.len() != CROPPED_BINS {
        return Err(StoneError::Shape(format!(
            "octave pooling expects {CROPPED_BINS} features, got {}",
            v.len()
        )));
    }
    Ok(Ksp::softmax(&octave_sums(v)))
}

/// Dense 84 -> 12 layer plus softmax; `weights` holds the 12x84 matrix then 12 biases.
pub fn ablation_fc_head(v: &[f64], weights: &[f64]) -> Result<Ksp> {
    if v.len() != CROPPED_BINS || weights.len() != CHROMAS * (CROPPED_BINS + 1) {
        return Err(StoneError::Shape(
            "dense head expects 84 features and 1020 weights".into(),
        ));
    }
    let bias = &weights[CHROMAS * CROPPED_BINS..];
    let logits: Vec<f64> = (0..CHROMAS)
        .map(|q| {
            bias[q]
                + weights[q * CROPPED_BINS..(q + 1) * CROPPED_BINS]
                    .iter()
                    .zip(v)
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
        })
        .collect();
    Ok(Ksp::softmax(&logits))
}

/// Per-mode-channel running mean and variance of the structured head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: [f64; 2],
    pub var: [f64; 2],
    pub momentum: f64,
    pub initialized: bool,
}

impl Default for RunningStats {
    fn default() -> Self {
        RunningStats {
            mean: [0.0; 2],
            var: [1.0; 2],
            momentum: 0.1,
            initialized: false,
        }
    }
}

impl RunningStats {
    fn update(&mut self, mean: [f64; 2], unbiased_var: [f64; 2]) {
        if !self.initialized {
            self.mean = mean;
            self.var = unbiased_var;
            self.initialized = true;
            return;
        }
        for m in 0..2 {
            self.mean[m] = (1.0 - self.momentum) * self.mean[m] + self.momentum * mean[m];
            self.var[m] = (1.0 - self.momentum) * self.var[m] + self.momentum * unbiased_var[m];
        }
    }

    /// Normalizes 24 channel-major logits with the frozen statistics.
    pub fn normalize(&self, logits: &[f64]) -> Result<Vec<f64>> {
        if !self.initialized {
            return Err(StoneError::NormalizationMissing);
        }
        Ok(logits
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let m = i / CHROMAS;
                (z - self.mean[m]) / (self.var[m] + BATCH_NORM_EPS).sqrt()
            })
            .collect())
    }
}

/// Inference-mode structured head on a 168-dim two-channel feature vector.
pub fn structured_head(v: &[f64], stats: &RunningStats) -> Result<KeyModeMatrix> {
    if v.len() != 2 * CROPPED_BINS {
        return Err(StoneError::Shape(format!(
            "structured head expects {} features, got {}",
            2 * CROPPED_BINS,
            v.len()
        )));
    }
    let logits: Vec<f64> = (0..2)
        .flat_map(|m| octave_sums(&v[m * CROPPED_BINS..(m + 1) * CROPPED_BINS]))
        .collect();
    structured_from_logits(&logits, stats)
}

/// Inference-mode structured head on 24 channel-major octave-summed logits.
pub fn structured_from_logits(logits: &[f64], stats: &RunningStats) -> Result<KeyModeMatrix> {
    Ok(KeyModeMatrix::softmax(&stats.normalize(logits)?))
}

/// Training-mode batch normalization over a batch of 24-logit responses.
pub struct BatchNorm {
    normalized: Vec<Vec<f64>>,
    inv_std: [f64; 2],
}

impl BatchNorm {
    /// Normalizes each mode channel with statistics over the batch and the
    /// 12 chromas, and folds them into `stats`.
    pub fn forward(logits: &[Vec<f64>], stats: &mut RunningStats) -> Self {
        let n = (logits.len() * CHROMAS) as f64;
        let mut mean = [0.0; 2];
        let mut var = [0.0; 2];
        for z in logits {
            for (i, &v) in z.iter().enumerate() {
                mean[i / CHROMAS] += v / n;
            }
        }
        for z in logits {
            for (i, &v) in z.iter().enumerate() {
                let d = v - mean[i / CHROMAS];
                var[i / CHROMAS] += d * d / n;
            }
        }
        let inv_std = [
            1.0 / (var[0] + BATCH_NORM_EPS).sqrt(),
            1.0 / (var[1] + BATCH_NORM_EPS).sqrt(),
        ];
        let normalized = logits
            .iter()
            .map(|z| {
                z.iter()
                    .enumerate()
                    .map(|(i, &v)| (v - mean[i / CHROMAS]) * inv_std[i / CHROMAS])
                    .collect()
            })
            .collect();
        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        stats.update(mean, [var[0] * unbias, var[1] * unbias]);
        BatchNorm {
            normalized,
            inv_std,
        }
    }

    pub fn normalized(&self) -> &[Vec<f64>] {
        &self.normalized
    }

    pub fn backward(&self, grads: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = (self.normalized.len() * CHROMAS) as f64;
        let mut mean_g = [0.0; 2];
        let mut mean_gx = [0.0; 2];
        for (g, x) in grads.iter().zip(&self.normalized) {
            for i in 0..2 * CHROMAS {
                mean_g[i / CHROMAS] += g[i] / n;
                mean_gx[i / CHROMAS] += g[i] * x[i] / n;
            }
        }
        grads
            .iter()
            .zip(&self.normalized)
            .map(|(g, x)| {
                (0..2 * CHROMAS)
                    .map(|i| {
                        let m = i / CHROMAS;
                        self.inv_std[m] * (g[i] - mean_g[m] - x[i] * mean_gx[m])
                    })
                    .collect()
            })
            .collect()
    }
}
