//! Quantum particle in a cavity whose wall oscillates, driven at resonance
//! between its levels, and the Pancharatnam phases accumulated along the way.
//!
//! The examples directory walks through each piece:
//! ```bash
//! cargo run --release --example evolve_resonance
//! cargo run --release --example phase_jump
//! ```

pub mod bessel;
pub mod config;
pub mod error;
pub mod evolve;
pub mod model;
pub mod ode;
pub mod output;
pub mod phase;
pub mod quadrature;
pub mod run;
pub mod rwa;
pub mod scan;
pub mod spin;
pub mod su2;

pub use error::{Error, Result};
