//! flimcurate: a desk-scale curation toolkit for point-level optical
//! measurements carrying coarse margin-level labels.
//!
//! The crate simulates fluorescence-lifetime waveforms with known ground
//! truth and injected label noise, extracts lifetime/Laguerre/phasor
//! features, trains baseline classifiers, runs a confident-learning engine
//! (confidence scores, confident joint, low-confidence and label-issue
//! flags), performs iterative class merging and pruning, and attributes
//! predictions to features. Everything is deterministic given a config and
//! a master seed.

pub mod attrib;
pub mod curate;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
