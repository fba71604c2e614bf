//! Simulation and analytics for ground-state cooling of a mechanical
//! oscillator by band-limited noise injected at the red sideband of a cavity.

pub mod analytics;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod noisegen;
pub mod params;
mod quad;
pub mod spectra;
pub mod stats;

pub use error::{Error, Result};
pub use params::{NoiseDrive, SimConfig, SystemParams};
