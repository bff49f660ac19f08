//! File formats, experiment runner and command line for spatio-temporal
//! activity-center POI recommendation. The algorithms live in `stacp-core`.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
