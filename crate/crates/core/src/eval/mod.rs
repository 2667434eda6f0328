//! Calibration, key decoding, KSEA and MIREX scoring, confusion matrices,
//! reports and the two non-learned baselines.

mod baselines;
mod calibration;
mod confusion;
mod metrics;
mod report;

pub use baselines::{
    baseline_chroma_argmax, baseline_template_matching, template_from_chroma, template_scores,
    KeyProfiles,
};
pub use calibration::{
    calibrate, decode_key, realign, realign_structured, CalibrationState, KeyPrediction, Scores,
    MIN_CALIBRATION_SPREAD,
};
pub use confusion::{cof_keys, cof_signatures, ConfusionMatrix};
pub use metrics::{
    key_category, ksea, mirex_score, mode_name, signature_category, Category, EvalCounts,
    FifthRule, MIREX_WEIGHTS,
};
pub use report::{describe, histogram_entropy, EvalReport, EvalSummary, TrackResult};
