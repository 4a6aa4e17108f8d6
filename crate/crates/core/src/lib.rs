//! Simulation library for gradient descent when gradient evaluations are
//! outsourced to a network in which rational adversaries may hold the
//! majority.
//!
//! The data collector announces an acceptance threshold `eta` each round,
//! the adversary best-responds with a noise strategy, reports are accepted
//! only when every pair lies within `eta * delta`, and accepted reports are
//! averaged into a gradient estimate. [`controller`] holds the adaptive
//! threshold/learning-rate rule (VISTA) and the constant-threshold
//! baselines; [`equilibrium`] computes the adversary's best response and the
//! induced `eta -> (acceptance probability, MSE)` curve; [`harness`] runs
//! seeded multi-run experiments; [`diagnostics`] checks recorded runs
//! against the convergence-proof invariants.

pub mod controller;
pub mod diagnostics;
pub mod equilibrium;
mod error;
pub mod estimator;
pub mod harness;
pub mod objectives;
pub mod seed;
mod vector;
pub mod workers;

pub use error::{Error, Result};
pub use vector::ParamVector;

/// Smallest admissible acceptance threshold: two honest reports with noise
/// bounded by `delta` can already be `2 * delta` apart.
pub const ETA_MIN: f64 = 2.0;
