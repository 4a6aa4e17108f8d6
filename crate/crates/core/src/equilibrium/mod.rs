//! The adversary's best response to an announced threshold, and the
//! tabulated curve `eta -> (acceptance probability, MSE, r*)` it induces.
//!
//! The adversary is restricted to the radial family of
//! [`AdversaryStrategy`](crate::workers::AdversaryStrategy), so each best
//! response is a one-dimensional search over the noise magnitude `r`.

mod curve;
mod isotonic;
mod solver;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use curve::{CurveViolation, EquilibriumCurve, CURVE_HEADER};
pub use isotonic::pool_adjacent_violators;
pub use solver::{
    best_response, evaluate_strategy, tabulate_curve, uniform_grid, SampleBank, SolverConfig,
    StrategyEstimate,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityKind {
    /// `log(MSE) + lambda * log(PA)`
    #[default]
    LogLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversaryUtility {
    pub kind: UtilityKind,
    pub lambda: f64,
}

impl AdversaryUtility {
    pub fn log_log(lambda: f64) -> Result<Self> {
        let u = Self {
            kind: UtilityKind::LogLog,
            lambda,
        };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "utility lambda must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Utility of a strategy with acceptance probability `pa` and MSE `mse`;
    /// `-inf` when never accepted.
    pub fn value(&self, pa: f64, mse: f64) -> f64 {
        if pa <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match self.kind {
            UtilityKind::LogLog => mse.ln() + self.lambda * pa.ln(),
        }
    }

    /// Delta-method standard error of [`value`](Self::value) from the
    /// standard errors of its two Monte Carlo inputs.
    pub fn stderr(&self, pa: f64, mse: f64, pa_stderr: f64, mse_stderr: f64) -> f64 {
        match self.kind {
            UtilityKind::LogLog => {
                let a = if mse > 0.0 { mse_stderr / mse } else { 0.0 };
                let b = if pa > 0.0 { self.lambda * pa_stderr / pa } else { 0.0 };
                (a * a + b * b).sqrt()
            }
        }
    }
}

/// Best response at one threshold, with the acceptance probability and MSE
/// it achieves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub eta: f64,
    pub pa: f64,
    pub mse: f64,
    pub r_star: f64,
    pub mc_samples: usize,
    pub pa_stderr: f64,
    pub mse_stderr: f64,
}

impl EquilibriumPoint {
    pub fn utility(&self, u: &AdversaryUtility) -> f64 {
        u.value(self.pa, self.mse)
    }
}
