//! Pointwise conditional average treatment effect estimation with a
//! second-order local polynomial R-learner, the matching lower-bound
//! constructions, and a seeded Monte Carlo rate harness.

pub mod basis;
pub mod checks;
pub mod construction;
pub mod data;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod hellinger;
pub mod nuisance;
pub mod par;
pub mod quadrature;

pub use error::{Error, Result};
