use serde::{Deserialize, Serialize};

use crate::error::{Result, StoneError};

/// Architecture hyperparameters of the ChromaNet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChromaNetConfig {
    /// Output width of each block; one entry per block.
    pub channels: Vec<usize>,
    /// Time downsampling factor of each block.
    pub time_downsample: Vec<usize>,
    /// Width of the stem output.
    pub stem_channels: usize,
    /// Frames merged by the stem's strided time convolution.
    pub stem_stride: usize,
    pub kernel_time: usize,
    pub kernel_freq: usize,
    /// Hidden width multiplier of the ConvNeXt pointwise MLP.
    pub expansion: usize,
    /// 1 for key-signature profiles, 2 for key/mode matrices.
    pub out_channels: usize,
    /// Replace the octave-equivalence operator by a trainable dense layer.
    #[serde(default)]
    pub ablation_fc_head: bool,
}

const FULL_WIDTHS: [usize; 7] = [8, 16, 32, 32, 64, 64, 64];

impl ChromaNetConfig {
    /// Seven blocks of widths 8..64, halving time resolution at every block.
    pub fn full(out_channels: usize) -> Self {
        ChromaNetConfig {
            channels: FULL_WIDTHS.to_vec(),
            time_downsample: vec![2; 7],
            stem_channels: FULL_WIDTHS[0],
            stem_stride: 1,
            kernel_time: 7,
            kernel_freq: 7,
            expansion: 4,
            out_channels,
            ablation_fc_head: false,
        }
    }

    /// The full layout with widths scaled by `multiplier` (at least one channel each).
    pub fn scaled(out_channels: usize, multiplier: f64) -> Self {
        let mut cfg = Self::full(out_channels);
        let scale = |w: usize| ((w as f64 * multiplier).round() as usize).max(1);
        cfg.channels = cfg.channels.iter().map(|&w| scale(w)).collect();
        cfg.stem_channels = cfg.channels[0];
        cfg
    }

    /// Width-reduced network with an 8-frame stem, sized for CPU training.
    pub fn desk(out_channels: usize) -> Self {
        let mut cfg = Self::scaled(out_channels, 0.5);
        cfg.stem_stride = 8;
        cfg
    }

    /// Two small blocks; used for gradient checks.
    pub fn tiny(out_channels: usize) -> Self {
        ChromaNetConfig {
            channels: vec![2, 3],
            time_downsample: vec![2, 1],
            stem_channels: 2,
            stem_stride: 2,
            kernel_time: 3,
            kernel_freq: 3,
            expansion: 2,
            out_channels,
            ablation_fc_head: false,
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(StoneError::Config(format!("chromanet: {m}")));
        if self.channels.is_empty() {
            return fail("at least one block is required");
        }
        if self.channels.len() != self.time_downsample.len() {
            return fail("channels and time_downsample must have one entry per block");
        }
        if self
            .channels
            .iter()
            .chain(&self.time_downsample)
            .any(|&v| v == 0)
            || self.stem_channels == 0
            || self.stem_stride == 0
            || self.expansion == 0
        {
            return fail("widths, strides and expansion must be positive");
        }
        if self.kernel_time % 2 == 0 || self.kernel_freq % 2 == 0 {
            return fail("kernel sizes must be odd for same padding");
        }
        if !(1..=2).contains(&self.out_channels) {
            return fail("out_channels must be 1 or 2");
        }
        if self.ablation_fc_head && self.out_channels != 1 {
            return fail("the dense-head ablation applies to the 12-class model only");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_config_scales_widths() {
        let cfg = ChromaNetConfig::desk(2);
        assert_eq!(cfg.channels, vec![4, 8, 16, 16, 32, 32, 32]);
        assert_eq!(cfg.n_blocks(), 7);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ChromaNetConfig::full(3);
        assert!(cfg.validate().is_err());
        cfg.out_channels = 2;
        cfg.ablation_fc_head = true;
        assert!(cfg.validate().is_err());
        let mut cfg = ChromaNetConfig::full(1);
        cfg.kernel_freq = 6;
        assert!(cfg.validate().is_err());
    }
}
