//! Criterion benchmarks for the front end, the network and the objectives.
//! Run with `cargo bench -p stone-bench`.

use stone_core::datasets::{render_track, SynthSpec};
use stone_core::frontend::{compute_cqt, AudioClip, CqtMatrix, CqtParams};

/// A ten-second synthetic track.
pub fn clip() -> AudioClip {
    render_track(&SynthSpec::default(), 0).clip
}

pub fn cqt() -> CqtMatrix {
    compute_cqt(&clip(), &CqtParams::default()).expect("cqt")
}
