//! Audio loading, constant-Q transform, segment pairs and crop transpositions.

mod audio;
mod cqt;
mod segment;

pub use audio::{load_audio, load_audio_resampled, write_wav, AudioClip};
pub use cqt::{
    compute_cqt, Cqt, CqtMatrix, CqtParams, BIN0_PITCH_CLASS, BINS_PER_OCTAVE, CQT_BINS,
};
pub use segment::{
    crop_shift_to_interval, extract_segment_pair, pair_from_cqt, sample_windows, transpose_crop,
    CroppedCqt, SegmentPair, CROPPED_BINS, MAX_CROP,
};
