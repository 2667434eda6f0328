//! The ChromaNet: a frequency-preserving convnet composed with the
//! octave-equivalence operator, in 12-class and 12x2 structured variants.

mod config;
mod head;
mod layers;
mod model;
mod real;

pub use config::ChromaNetConfig;
pub use head::{
    ablation_fc_head, argmax, lambda_of, mu_of, octave_pool_g, softmax, softmax_backward,
    structured_from_logits, structured_head, BatchNorm, KeyModeMatrix, Ksp, ModeVector,
    RunningStats, BATCH_NORM_EPS,
};
pub use layers::Tensor;
pub use model::{octave_sums, ChromaNet, Trace, CHROMAS, OCTAVES};
pub use real::Real;
