//! Probabilistic anticipation of future activity segments.
//!
//! A video is a sequence of action segments (label, length in frames). Two
//! models describe what comes next: a distribution over the next label and a
//! Gaussian over the next segment's length given that label. Future timelines
//! are generated either by repeatedly sampling from both, or by taking the
//! most likely label and the mean length at every step. An n-gram baseline
//! with per-class Gaussian lengths implements the same interface.

pub mod anticipate;
pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod dump;
pub mod error;
pub mod eval;
pub mod model;
pub mod ngram;
pub mod nn;
pub mod rng;
pub mod segment;
pub mod synth;

pub use error::{Error, Result};
