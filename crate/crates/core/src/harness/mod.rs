//! Experiment orchestration: the per-round Stackelberg loop, seeded
//! multi-run batches, aggregation and result files.
//!
//! Each round the policy announces `eta`, the adversary plays the tabulated
//! best response `r*(eta)`, reports are drawn, the acceptance rule is
//! applied, and the policy is updated. Every random draw of round `t` of run
//! `i` comes from a generator keyed on `(master_seed, i, t)`.

mod config;
mod output;
mod run;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use config::{
    CurveSection, ExperimentConfig, NetworkSection, ObjectiveSection, PolicyKind, PolicySection,
    RunSection, UtilitySection, MIN_CURVE_POINTS,
};
pub use output::{
    format_csv_value, write_aggregate_csv, write_batch, write_comparison, write_runs_jsonl,
    AGGREGATE_HEADER,
};
pub use run::{
    aggregate, aggregate_moving_average, compare, run_batch, run_batch_with_seeds, run_single,
    AggregateRecord, AggregateRow, BatchResult, Comparison, RoundRecord, RunRecord, RunSummary,
};

use crate::controller::{constant_policy, Controller, Vista, VistaConfig, VistaMode};
use crate::equilibrium::{AdversaryUtility, EquilibriumCurve};
use crate::estimator::EstimatorSpec;
use crate::objectives::Objective;
use crate::workers::NetworkSpec;
use crate::{Error, ParamVector, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicySpec {
    Vista {
        b0: f64,
        c: f64,
        beta: f64,
        /// Defaults to the middle of the curve's range.
        eta0: Option<f64>,
        mode: VistaMode,
    },
    Constant {
        b0: f64,
        eta_fixed: f64,
    },
}

impl PolicySpec {
    pub fn b0(&self) -> f64 {
        match *self {
            PolicySpec::Vista { b0, .. } | PolicySpec::Constant { b0, .. } => b0,
        }
    }

    pub fn default_label(&self) -> String {
        match *self {
            PolicySpec::Vista {
                mode: VistaMode::EmaProxy,
                ..
            } => "vista".into(),
            PolicySpec::Vista {
                mode: VistaMode::Oracle,
                ..
            } => "vista-oracle".into(),
            PolicySpec::Constant { eta_fixed, .. } => format!("constant-{eta_fixed}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Telemetry {
    pub ma_window: Option<usize>,
    /// Row spacing of the aggregate CSV (the final round is always written).
    pub record_stride: usize,
}

impl Default for Telemetry {
    fn default() -> Self {
        Self {
            ma_window: None,
            record_stride: 1,
        }
    }
}

/// A fully resolved experiment: everything a batch needs, with the curve
/// already loaded or tabulated.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub label: String,
    pub objective: Objective,
    pub network: NetworkSpec,
    pub utility: AdversaryUtility,
    pub estimator: EstimatorSpec,
    pub policy: PolicySpec,
    pub curve: Arc<EquilibriumCurve>,
    pub w_init: ParamVector,
    pub horizon: usize,
    pub runs: usize,
    pub master_seed: u64,
    pub telemetry: Telemetry,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        if self.w_init.dim() != self.objective.dim {
            return Err(Error::Config(format!(
                "w_init has dimension {}, objective {} has {}",
                self.w_init.dim(),
                self.objective.name,
                self.objective.dim
            )));
        }
        if self.horizon == 0 || self.runs == 0 {
            return Err(Error::Config("horizon and runs must be >= 1".into()));
        }
        if self.telemetry.record_stride == 0 || self.telemetry.ma_window == Some(0) {
            return Err(Error::Config("record_stride and ma_window must be >= 1".into()));
        }
        self.network.validate()?;
        self.utility.validate()?;
        self.build_controller()?;
        Ok(())
    }

    /// Fresh controller at `w_init`.
    pub fn build_controller(&self) -> Result<Controller> {
        match self.policy {
            PolicySpec::Vista {
                b0,
                c,
                beta,
                eta0,
                mode,
            } => {
                let mut cfg = VistaConfig::new(b0, c, beta, self.curve.clone(), mode)?;
                if let Some(eta0) = eta0 {
                    cfg = cfg.with_eta0(eta0)?;
                }
                cfg.check_theorem_step(self.objective.smoothness);
                Ok(Controller::Vista(Vista::init(cfg, self.w_init.clone())?))
            }
            PolicySpec::Constant { b0, eta_fixed } => Ok(Controller::Constant(constant_policy(
                eta_fixed,
                b0,
                &self.curve,
                self.w_init.clone(),
            )?)),
        }
    }

    /// Same experiment under a different policy and label.
    pub fn with_policy(&self, policy: PolicySpec, label: impl Into<String>) -> Self {
        Self {
            policy,
            label: label.into(),
            ..self.clone()
        }
    }

    pub fn echo(&self) -> ExperimentEcho {
        let c = &self.curve;
        ExperimentEcho {
            label: self.label.clone(),
            objective: self.objective.name.clone(),
            dim: self.objective.dim,
            smoothness: self.objective.smoothness,
            network: self.network,
            utility: self.utility,
            estimator: self.estimator.name().into(),
            policy: self.policy,
            curve: CurveEcho {
                eta_min: c.eta_min,
                eta_max: c.eta_max,
                points: c.len(),
                sigma2_min: c.sigma2_min,
                sigma2_max: c.sigma2_max,
                p_min: c.p_min,
                p_max: c.p_max,
            },
            w_init: self.w_init.clone(),
            horizon: self.horizon,
            runs: self.runs,
            master_seed: self.master_seed,
            telemetry: self.telemetry,
        }
    }
}

/// Serializable description of an [`Experiment`] for result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentEcho {
    pub label: String,
    pub objective: String,
    pub dim: usize,
    pub smoothness: f64,
    pub network: NetworkSpec,
    pub utility: AdversaryUtility,
    pub estimator: String,
    pub policy: PolicySpec,
    pub curve: CurveEcho,
    pub w_init: ParamVector,
    pub horizon: usize,
    pub runs: usize,
    pub master_seed: u64,
    pub telemetry: Telemetry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveEcho {
    pub eta_min: f64,
    pub eta_max: f64,
    pub points: usize,
    pub sigma2_min: f64,
    pub sigma2_max: f64,
    pub p_min: f64,
    pub p_max: f64,
}
