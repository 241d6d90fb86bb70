//! Population-coded spiking actor networks (PopSAN) for continuous control.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod conversion;
pub mod deploy;
pub mod drl;
pub mod envs;
pub mod error;
pub mod gradients;
pub mod mlp;
pub mod optim;
pub mod popcode;
pub mod popsan;
pub mod rng;
pub mod snn;

pub use error::{Error, Result};
