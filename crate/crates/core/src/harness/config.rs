//! TOML experiment configuration.
//!
//! ```toml
//! [objective]
//! name = "synthetic1d"
//!
//! [network]
//! n = 2
//! n_honest = 1
//! delta = 1.0
//!
//! [utility]
//! lambda = 0.1
//!
//! [policy]
//! kind = "vista"          # or "vista-oracle", "constant"
//! b0 = 0.1
//! c = 1.0
//!
//! [curve]
//! path = "curves/1d.csv"  # loaded if present, otherwise tabulated and cached
//! eta_max = 60.0
//! points = 117
//!
//! [run]
//! w_init = [40.0]
//! horizon = 2000
//! runs = 500
//! master_seed = 1
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Experiment, PolicySpec, Telemetry};
use crate::controller::VistaMode;
use crate::equilibrium::{tabulate_curve, uniform_grid, AdversaryUtility, EquilibriumCurve, SolverConfig, UtilityKind};
use crate::estimator::EstimatorSpec;
use crate::objectives::lookup;
use crate::workers::NetworkSpec;
use crate::{Error, ParamVector, Result, ETA_MIN};

/// Smallest grid accepted for inline tabulation.
pub const MIN_CURVE_POINTS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSection,
    pub network: NetworkSection,
    pub utility: UtilitySection,
    pub policy: PolicySection,
    pub curve: CurveSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub n: usize,
    pub n_honest: usize,
    pub delta: f64,
    #[serde(default = "default_estimator")]
    pub estimator: String,
}

fn default_estimator() -> String {
    "mean".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySection {
    #[serde(default)]
    pub kind: UtilityKind,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Vista,
    VistaOracle,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub kind: PolicyKind,
    pub b0: f64,
    pub c: Option<f64>,
    pub beta: Option<f64>,
    pub eta0: Option<f64>,
    pub eta_fixed: Option<f64>,
    /// Output name; defaults to `vista`, `vista-oracle` or `constant-<eta>`.
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    /// Cache file. Loaded when it exists; written after inline tabulation.
    pub path: Option<PathBuf>,
    #[serde(default = "default_eta_min")]
    pub eta_min: f64,
    pub eta_max: Option<f64>,
    pub points: Option<usize>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_eta_min() -> f64 {
    ETA_MIN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub w_init: Vec<f64>,
    pub horizon: usize,
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub output: Option<PathBuf>,
    pub ma_window: Option<usize>,
    #[serde(default = "one")]
    pub record_stride: usize,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    /// Parses TOML and resolves relative paths against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(p) = cfg.curve.path.as_mut() {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        if let Some(p) = cfg.run.output.as_mut() {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let objective = lookup(&self.objective.name)?;
        if self.run.w_init.len() != objective.dim {
            return Err(Error::Config(format!(
                "w_init has dimension {}, objective {} has {}",
                self.run.w_init.len(),
                objective.name,
                objective.dim
            )));
        }
        if self.run.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.run.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.run.record_stride == 0 {
            return Err(Error::Config("record_stride must be >= 1".into()));
        }
        if self.run.ma_window == Some(0) {
            return Err(Error::Config("ma_window must be >= 1".into()));
        }
        NetworkSpec::new(self.network.n, self.network.n_honest, self.network.delta)?;
        EstimatorSpec::from_name(&self.network.estimator)?;
        self.utility().validate()?;
        self.policy_spec()?;
        let has_inline = self.curve.eta_max.is_some() || self.curve.points.is_some();
        if self.curve.path.is_none() && !has_inline {
            return Err(Error::Config(
                "curve needs a cache path or inline eta_max and points".into(),
            ));
        }
        if has_inline {
            self.inline_grid()?;
            self.curve.solver.validate()?;
        }
        Ok(())
    }

    fn utility(&self) -> AdversaryUtility {
        AdversaryUtility {
            kind: self.utility.kind,
            lambda: self.utility.lambda,
        }
    }

    fn inline_grid(&self) -> Result<Vec<f64>> {
        let (Some(eta_max), Some(points)) = (self.curve.eta_max, self.curve.points) else {
            return Err(Error::Config("inline curve needs both eta_max and points".into()));
        };
        if points < MIN_CURVE_POINTS {
            return Err(Error::Config(format!(
                "curve needs at least {MIN_CURVE_POINTS} points, got {points}"
            )));
        }
        if self.curve.eta_min < ETA_MIN || !(eta_max > self.curve.eta_min) {
            return Err(Error::Config(format!(
                "curve range [{}, {eta_max}] invalid",
                self.curve.eta_min
            )));
        }
        Ok(uniform_grid(self.curve.eta_min, eta_max, points))
    }

    fn policy_spec(&self) -> Result<PolicySpec> {
        let p = &self.policy;
        let reject = |field: &str| {
            Err(Error::Config(format!(
                "policy field `{field}` does not apply to kind {:?}",
                p.kind
            )))
        };
        match p.kind {
            PolicyKind::Vista | PolicyKind::VistaOracle => {
                if p.eta_fixed.is_some() {
                    return reject("eta_fixed");
                }
                Ok(PolicySpec::Vista {
                    b0: p.b0,
                    c: p.c.ok_or_else(|| Error::Config("vista policy needs `c`".into()))?,
                    beta: p.beta.unwrap_or(0.9),
                    eta0: p.eta0,
                    mode: if p.kind == PolicyKind::Vista {
                        VistaMode::EmaProxy
                    } else {
                        VistaMode::Oracle
                    },
                })
            }
            PolicyKind::Constant => {
                for (name, v) in [("c", p.c), ("beta", p.beta), ("eta0", p.eta0)] {
                    if v.is_some() {
                        return reject(name);
                    }
                }
                Ok(PolicySpec::Constant {
                    b0: p.b0,
                    eta_fixed: p
                        .eta_fixed
                        .ok_or_else(|| Error::Config("constant policy needs `eta_fixed`".into()))?,
                })
            }
        }
    }

    /// Loads the cached curve if present, else tabulates it (and caches it
    /// when a path is configured).
    pub fn resolve_curve(&self) -> Result<EquilibriumCurve> {
        if let Some(path) = &self.curve.path {
            if path.exists() {
                tracing::info!(path = %path.display(), "loading equilibrium curve");
                return EquilibriumCurve::load(path);
            }
        }
        let curve = self.tabulate_curve(self.curve.seed)?;
        if let Some(path) = &self.curve.path {
            curve.save(path)?;
        }
        Ok(curve)
    }

    /// Tabulates the inline curve specification with `seed`.
    pub fn tabulate_curve(&self, seed: u64) -> Result<EquilibriumCurve> {
        let grid = self.inline_grid()?;
        let objective = lookup(&self.objective.name)?;
        let net = NetworkSpec::new(self.network.n, self.network.n_honest, self.network.delta)?;
        let est = EstimatorSpec::from_name(&self.network.estimator)?;
        tracing::info!(points = grid.len(), samples = self.curve.solver.samples, "tabulating equilibrium curve");
        tabulate_curve(&grid, &self.utility(), &net, &est, objective.dim, &self.curve.solver, seed)
    }

    /// Builds the runnable experiment, resolving the curve.
    pub fn build(&self) -> Result<Experiment> {
        let curve = Arc::new(self.resolve_curve()?);
        self.build_with_curve(curve)
    }

    pub fn build_with_curve(&self, curve: Arc<EquilibriumCurve>) -> Result<Experiment> {
        let policy = self.policy_spec()?;
        let label = self.policy.label.clone().unwrap_or_else(|| policy.default_label());
        let exp = Experiment {
            label,
            objective: lookup(&self.objective.name)?,
            network: NetworkSpec::new(self.network.n, self.network.n_honest, self.network.delta)?,
            utility: self.utility(),
            estimator: EstimatorSpec::from_name(&self.network.estimator)?,
            policy,
            curve,
            w_init: ParamVector::from(self.run.w_init.clone()),
            horizon: self.run.horizon,
            runs: self.run.runs,
            master_seed: self.run.master_seed,
            telemetry: Telemetry {
                ma_window: self.run.ma_window,
                record_stride: self.run.record_stride,
            },
        };
        exp.validate()?;
        Ok(exp)
    }
}
