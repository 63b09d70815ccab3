//! Screen-and-clean variable selection for sparse linear regression, with
//! baseline selectors, phase-diagram formulas and a Monte Carlo harness.

pub mod baselines;
pub mod calib;
pub mod datagen;
pub mod error;
pub mod graphops;
pub mod harness;
pub mod matrixgen;
pub mod phase;
pub mod rng;
pub mod sparse;
pub mod ups;

pub use error::{Error, Result};
