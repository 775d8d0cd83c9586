//! Declarative experiment runner over `recon-core`: sweeps, optimizations,
//! simulations and region maps written as CSV with a hashed manifest.

pub mod bundled;
pub mod compare;
pub mod error;
pub mod run;
pub mod spec;

pub use error::{CliError, Result};
