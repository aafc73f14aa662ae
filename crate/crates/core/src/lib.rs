pub mod classic;
pub mod error;
pub mod harness;
pub mod impairments;
pub mod models;
pub mod nn;
pub mod pipelines;
pub mod scenario;
pub mod signal;
pub mod waveforms;

pub use error::{Error, Result};
