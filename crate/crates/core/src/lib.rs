//! Cross-modal knowledge distillation for ear-EEG sleep staging.
//!
//! The crate covers the whole experimental path: band-pass filtering and
//! channel rejection ([`signal`], [`preprocess`]), paired scalp / ear epochs
//! and LOSO folds ([`dataset`]), toy-scale sleep stagers ([`models`]), the
//! supervised, transfer and feature-distillation training strategies
//! ([`training`]) and the metrics and feature analysis used to compare them
//! ([`evaluation`]).

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod nn;
pub mod preprocess;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
