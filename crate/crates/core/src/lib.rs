//! Quantum adaptive self-attention for time-series forecasting: a tape
//! autodiff engine, a statevector simulator, the hybrid encoder models,
//! synthetic data and a training loop.

pub mod autodiff;
pub mod circuit;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod model;
pub mod qsim;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
