//! Simulation of Gaussian extreme-value constants (Pickands, Piterbarg and
//! Berman constants) and sojourn-time tail experiments.

pub mod analytic;
pub mod constants;
pub mod error;
pub mod paths;
pub mod record;
pub mod sojourn;
pub mod stats;
pub mod validate;

pub use error::{Error, Result};
