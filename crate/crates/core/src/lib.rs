//! Simulation of Rydberg-blockade entangling protocols driven by rapid
//! adiabatic passage.
//!
//! All quantities are dimensionless: rates and frequencies are in units of a
//! reference Rabi frequency `Omega0` and times in units of `1 / Omega0`.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod geometry;
mod integrator;
pub mod protocols;
pub mod pulses;
pub mod quantum;
pub mod units;

pub use error::{Error, Result};
