//! STONE: self-supervised tonality estimation from constant-Q spectrograms.
//!
//! The crate covers the whole pipeline: audio loading and CQT
//! ([`frontend`]), the ChromaNet ([`chromanet`]), circle-of-fifths
//! objectives ([`objectives`]), datasets, training and evaluation.

pub mod chromanet;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod objectives;
pub mod training;

pub use chromanet::{ChromaNet, ChromaNetConfig, KeyModeMatrix, Ksp, ModeVector};
pub use datasets::{KeyLabel, Mode};
pub use error::{Result, StoneError};
pub use objectives::{CofFrequency, LossBreakdown};
