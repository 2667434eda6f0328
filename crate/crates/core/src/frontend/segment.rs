use rand::Rng;

use super::audio::AudioClip;
use super::cqt::{compute_cqt, CqtMatrix, CqtParams, CQT_BINS};
use crate::error::{Result, StoneError};

/// Rows kept after cropping: seven octaves of twelve bins.
pub const CROPPED_BINS: usize = 84;
/// Largest crop offset, `99 - 84`.
pub const MAX_CROP: usize = CQT_BINS - CROPPED_BINS;

/// An 84-row window of a [`CqtMatrix`], row-major `[bin][frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CroppedCqt {
    crop: usize,
    n_frames: usize,
    data: Vec<f32>,
}

impl CroppedCqt {
    pub fn crop(&self) -> usize {
        self.crop
    }

    pub fn n_bins(&self) -> usize {
        CROPPED_BINS
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, bin: usize) -> &[f32] {
        &self.data[bin * self.n_frames..(bin + 1) * self.n_frames]
    }
}

/// Keeps rows `c..c + 84`, trimming the `c` lowest and `15 - c` highest bins.
///
/// Content at input bin `p` lands on output row `p - c`, so raising `c` by `k`
/// reads as a transposition of `-k` semitones.
pub fn transpose_crop(x: &CqtMatrix, c: i64) -> Result<CroppedCqt> {
    if !(0..=MAX_CROP as i64).contains(&c) {
        return Err(StoneError::CropOutOfRange(c));
    }
    let c = c as usize;
    let t = x.n_frames();
    Ok(CroppedCqt {
        crop: c,
        n_frames: t,
        data: x.data()[c * t..(c + CROPPED_BINS) * t].to_vec(),
    })
}

/// Pitch interval (semitones) between `T_c x` and `T_{c+k} x`.
pub fn crop_shift_to_interval(k: i64) -> i64 {
    -k
}

/// Two equal-length, non-overlapping CQT excerpts of one track.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPair {
    pub xa: CqtMatrix,
    pub xb: CqtMatrix,
    pub source_id: String,
}

/// Picks two disjoint windows of `seg_frames` frames inside `n_frames`;
/// returns `(start_a, start_b)`.
pub fn sample_windows<R: Rng + ?Sized>(
    n_frames: usize,
    seg_frames: usize,
    rng: &mut R,
) -> Option<(usize, usize)> {
    if seg_frames == 0 || 2 * seg_frames > n_frames {
        return None;
    }
    let first = rng.gen_range(0..=n_frames - 2 * seg_frames);
    let second = rng.gen_range(first + seg_frames..=n_frames - seg_frames);
    if rng.gen::<bool>() {
        Some((first, second))
    } else {
        Some((second, first))
    }
}

/// Draws a segment pair from a precomputed track CQT.
pub fn pair_from_cqt<R: Rng + ?Sized>(
    track: &CqtMatrix,
    seg_frames: usize,
    source_id: &str,
    rng: &mut R,
) -> Result<SegmentPair> {
    let (a, b) = sample_windows(track.n_frames(), seg_frames, rng).ok_or_else(|| {
        StoneError::ClipTooShort {
            required: 2.0 * seg_frames as f64,
            actual: track.n_frames() as f64,
        }
    })?;
    Ok(SegmentPair {
        xa: track.slice_frames(a, seg_frames),
        xb: track.slice_frames(b, seg_frames),
        source_id: source_id.to_string(),
    })
}

/// Computes the clip's CQT and cuts two disjoint `seg_len`-second excerpts.
pub fn extract_segment_pair<R: Rng + ?Sized>(
    clip: &AudioClip,
    seg_len: f64,
    params: &CqtParams,
    source_id: &str,
    rng: &mut R,
) -> Result<SegmentPair> {
    if clip.duration() + 1e-9 < 2.0 * seg_len {
        return Err(StoneError::ClipTooShort {
            required: 2.0 * seg_len,
            actual: clip.duration(),
        });
    }
    let cqt = compute_cqt(clip, params)?;
    let seg_frames = params.frames_for(seg_len).min(cqt.n_frames() / 2);
    pair_from_cqt(&cqt, seg_frames, source_id, rng)
}
