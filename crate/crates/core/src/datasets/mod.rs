//! Key labels, manifests, synthetic corpora and label subsampling.

mod labels;
mod manifest;
mod subsample;
mod synth;

pub use labels::{KeyLabel, Mode};
pub use manifest::{load_manifest, DatasetManifest, ManifestEntry, DEFAULT_SPLIT};
pub use subsample::{subsample_labels, subsample_size};
pub use synth::{
    calibration_clip, render_corpus, render_track, synthesize_corpus, KeyDistribution, SynthSpec,
    SynthTrack,
};
