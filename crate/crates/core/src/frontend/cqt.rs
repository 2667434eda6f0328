//! Constant-Q transform with 12 bins per octave from 27.5 Hz.
//!
//! Each bin is a Hann-windowed complex exponential whose length spans a fixed
//! number of periods. Low bins are evaluated on a decimated copy of the signal
//! (successive half-band low-pass + downsample by two) so every kernel stays a
//! few hundred taps long.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::audio::AudioClip;
use crate::error::{Result, StoneError};

pub const CQT_BINS: usize = 99;
pub const BINS_PER_OCTAVE: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CqtParams {
    /// Canonical rate every clip is resampled to at ingestion.
    pub sample_rate: u32,
    pub hop_length: usize,
    pub fmin: f64,
    pub n_bins: usize,
    pub bins_per_octave: usize,
    /// Multiplies the kernel length; 1.0 gives a bandwidth of one bin.
    pub filter_scale: f64,
    /// Magnitudes are stored as `ln(1 + log_gain * |X|)`.
    pub log_gain: f64,
}

impl Default for CqtParams {
    fn default() -> Self {
        CqtParams {
            sample_rate: 22050,
            hop_length: 1024,
            fmin: 27.5,
            n_bins: CQT_BINS,
            bins_per_octave: BINS_PER_OCTAVE,
            filter_scale: 1.0,
            log_gain: 100.0,
        }
    }
}

impl CqtParams {
    pub fn center_frequency(&self, bin: usize) -> f64 {
        self.fmin * 2f64.powf(bin as f64 / self.bins_per_octave as f64)
    }

    /// Upper edge of the analysed range, `fmin * 2^(n_bins / bins_per_octave)`.
    pub fn max_frequency(&self) -> f64 {
        self.fmin * 2f64.powf(self.n_bins as f64 / self.bins_per_octave as f64)
    }

    pub fn quality_factor(&self) -> f64 {
        self.filter_scale / (2f64.powf(1.0 / self.bins_per_octave as f64) - 1.0)
    }

    /// Number of frames covering `seconds` of audio.
    pub fn frames_for(&self, seconds: f64) -> usize {
        (seconds * self.sample_rate as f64 / self.hop_length as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins != CQT_BINS || self.bins_per_octave != BINS_PER_OCTAVE {
            return Err(StoneError::Config(format!(
                "CQT must have {CQT_BINS} bins at {BINS_PER_OCTAVE} per octave"
            )));
        }
        if self.hop_length == 0 || !self.hop_length.is_power_of_two() {
            return Err(StoneError::Config(
                "hop_length must be a nonzero power of two".into(),
            ));
        }
        if !(self.fmin > 0.0 && self.filter_scale > 0.0 && self.log_gain > 0.0) {
            return Err(StoneError::Config(
                "fmin, filter_scale and log_gain must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Log-compressed CQT magnitudes, row-major `[bin][frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CqtMatrix {
    n_frames: usize,
    data: Vec<f32>,
}

impl CqtMatrix {
    pub fn from_rows(n_frames: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != CQT_BINS * n_frames {
            return Err(StoneError::BadFrequencySpan {
                expected: CQT_BINS,
                actual: data.len() / n_frames.max(1),
            });
        }
        Ok(CqtMatrix { n_frames, data })
    }

    pub fn n_bins(&self) -> usize {
        CQT_BINS
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn row(&self, bin: usize) -> &[f32] {
        &self.data[bin * self.n_frames..(bin + 1) * self.n_frames]
    }

    pub fn get(&self, bin: usize, frame: usize) -> f32 {
        self.data[bin * self.n_frames + frame]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Frames `start..start + len`.
    pub fn slice_frames(&self, start: usize, len: usize) -> CqtMatrix {
        assert!(start + len <= self.n_frames, "frame slice out of range");
        let mut data = Vec::with_capacity(CQT_BINS * len);
        for bin in 0..CQT_BINS {
            data.extend_from_slice(&self.row(bin)[start..start + len]);
        }
        CqtMatrix {
            n_frames: len,
            data,
        }
    }

    /// Mean over time of every bin.
    pub fn time_average(&self) -> Vec<f64> {
        (0..CQT_BINS)
            .map(|b| {
                self.row(b).iter().map(|&v| v as f64).sum::<f64>() / self.n_frames.max(1) as f64
            })
            .collect()
    }

    /// Mean energy per pitch class (0 = C), undoing the log compression
    /// applied with gain `log_gain`.
    pub fn chroma_energy(&self, log_gain: f64) -> [f64; 12] {
        let mut out = [0.0; 12];
        for bin in 0..CQT_BINS {
            let energy: f64 = self
                .row(bin)
                .iter()
                .map(|&v| {
                    let m = (v as f64).exp_m1() / log_gain;
                    m * m
                })
                .sum();
            out[(bin + BIN0_PITCH_CLASS) % 12] += energy / self.n_frames.max(1) as f64;
        }
        out
    }
}

/// Pitch class of bin 0 at the default `fmin` (A0).
pub const BIN0_PITCH_CLASS: usize = 9;

struct BinKernel {
    level: usize,
    cos: Vec<f32>,
    sin: Vec<f32>,
}

/// A CQT filterbank prepared for one sample rate.
pub struct Cqt {
    params: CqtParams,
    sample_rate: u32,
    kernels: Vec<BinKernel>,
    levels: usize,
    lowpass: Vec<f32>,
    min_samples: usize,
}

impl Cqt {
    pub fn new(params: &CqtParams, sample_rate: u32) -> Result<Self> {
        params.validate()?;
        let max_freq = params.max_frequency();
        if (sample_rate as f64) < 2.0 * max_freq {
            return Err(StoneError::InsufficientBandwidth {
                sample_rate,
                max_freq,
            });
        }
        let sr = sample_rate as f64;
        let q = params.quality_factor();
        let max_level = params.hop_length.trailing_zeros() as usize;
        let mut kernels = Vec::with_capacity(params.n_bins);
        let mut min_samples = 0;
        for bin in 0..params.n_bins {
            let freq = params.center_frequency(bin);
            // Largest decimation keeping the bin below an eighth of the local rate.
            let level = ((sr / (8.0 * freq)).log2().floor().max(0.0) as usize).min(max_level);
            let local_sr = sr / (1u64 << level) as f64;
            let len = (q * local_sr / freq).ceil() as usize | 1;
            min_samples = min_samples.max(len << level);
            let window: Vec<f64> = (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * (n as f64 + 0.5) / len as f64).cos())
                .collect();
            let norm = 2.0 / window.iter().sum::<f64>();
            let center = (len / 2) as f64;
            let (cos, sin) = window
                .iter()
                .enumerate()
                .map(|(n, w)| {
                    let phase = 2.0 * PI * freq * (n as f64 - center) / local_sr;
                    (
                        (w * norm * phase.cos()) as f32,
                        (-w * norm * phase.sin()) as f32,
                    )
                })
                .unzip();
            kernels.push(BinKernel { level, cos, sin });
        }
        let levels = kernels.iter().map(|k| k.level).max().unwrap_or(0) + 1;
        Ok(Cqt {
            params: params.clone(),
            sample_rate,
            kernels,
            levels,
            lowpass: halfband_lowpass(),
            min_samples,
        })
    }

    pub fn params(&self) -> &CqtParams {
        &self.params
    }

    /// Length of the longest analysis window in samples.
    pub fn min_samples(&self) -> usize {
        self.min_samples
    }

    pub fn transform(&self, clip: &AudioClip) -> Result<CqtMatrix> {
        if clip.sample_rate != self.sample_rate {
            return Err(StoneError::Config(format!(
                "filterbank built for {} Hz, clip is {} Hz",
                self.sample_rate, clip.sample_rate
            )));
        }
        if clip.samples.len() < self.min_samples {
            return Err(StoneError::ClipTooShort {
                required: self.min_samples as f64 / self.sample_rate as f64,
                actual: clip.duration(),
            });
        }
        let hop = self.params.hop_length;
        let n_frames = clip.samples.len() / hop + 1;
        let mut signals = Vec::with_capacity(self.levels);
        signals.push(clip.samples.clone());
        for level in 1..self.levels {
            let next = decimate(&signals[level - 1], &self.lowpass);
            signals.push(next);
        }
        let gain = self.params.log_gain as f32;
        let mut data = vec![0f32; CQT_BINS * n_frames];
        for (bin, kernel) in self.kernels.iter().enumerate() {
            let signal = &signals[kernel.level];
            let local_hop = hop >> kernel.level;
            let half = (kernel.cos.len() / 2) as isize;
            let row = &mut data[bin * n_frames..(bin + 1) * n_frames];
            for (t, out) in row.iter_mut().enumerate() {
                let start = (t * local_hop) as isize - half;
                let lo = (-start).max(0) as usize;
                let hi = ((signal.len() as isize - start).max(0) as usize).min(kernel.cos.len());
                let (mut re, mut im) = (0f32, 0f32);
                if lo < hi {
                    let seg =
                        &signal[(start + lo as isize) as usize..(start + hi as isize) as usize];
                    for ((s, c), si) in seg.iter().zip(&kernel.cos[lo..hi]).zip(&kernel.sin[lo..hi])
                    {
                        re += s * c;
                        im += s * si;
                    }
                }
                *out = (gain * (re * re + im * im).sqrt()).ln_1p();
            }
        }
        Ok(CqtMatrix { n_frames, data })
    }
}

/// Computes the log-compressed CQT of a mono clip.
pub fn compute_cqt(clip: &AudioClip, params: &CqtParams) -> Result<CqtMatrix> {
    Cqt::new(params, clip.sample_rate)?.transform(clip)
}

/// Blackman-windowed sinc low-pass with cutoff at 0.22 of the input rate.
fn halfband_lowpass() -> Vec<f32> {
    const TAPS: usize = 63;
    const CUTOFF: f64 = 0.22;
    let m = (TAPS - 1) as f64;
    let mut h: Vec<f64> = (0..TAPS)
        .map(|n| {
            let x = n as f64 - m / 2.0;
            let sinc = if x == 0.0 {
                2.0 * CUTOFF
            } else {
                (2.0 * PI * CUTOFF * x).sin() / (PI * x)
            };
            let w = 0.42 - 0.5 * (2.0 * PI * n as f64 / m).cos()
                + 0.08 * (4.0 * PI * n as f64 / m).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h.into_iter().map(|v| v as f32).collect()
}

/// Zero-phase low-pass followed by keeping every other sample.
fn decimate(signal: &[f32], taps: &[f32]) -> Vec<f32> {
    let half = (taps.len() / 2) as isize;
    let n_out = signal.len().div_ceil(2);
    (0..n_out)
        .map(|i| {
            let center = 2 * i as isize;
            let lo = (half - center).max(0) as usize;
            let hi = (signal.len() as isize - center + half).min(taps.len() as isize) as usize;
            let mut acc = 0f32;
            for j in lo..hi {
                acc += taps[j] * signal[(center + j as isize - half) as usize];
            }
            acc
        })
        .collect()
}
