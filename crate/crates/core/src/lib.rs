//! Inference-aware real-time reconstruction of a spatially and temporally
//! correlated Gaussian field sampled by sensors over short-packet Rayleigh
//! links.
//!
//! The crate provides the source model, finite-blocklength reliability,
//! closed-form average MSE for three reconstruction schemes, preference
//! regions, blocklength and time-shift optimizers, and two Monte Carlo
//! simulators used as oracles for the closed forms.

pub mod analytic;
pub mod error;
pub mod model;
pub mod optimize;
pub mod regions;
pub mod rng;
pub mod roots;
pub mod simulate;
pub mod spt;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
