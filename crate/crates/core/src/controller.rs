//! Threshold and learning-rate policies.
//!
//! [`Vista`] adapts the acceptance threshold so that the equilibrium MSE
//! tracks `c` times a gradient-norm proxy, and decays the learning rate only
//! on accepted rounds played at the strictest threshold. In oracle mode the
//! proxy is replaced by the true squared gradient norm at the new iterate.
//! [`ConstantPolicy`] keeps the threshold fixed and decays the learning rate
//! with the number of accepted rounds.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumCurve;
use crate::{Error, ParamVector, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VistaMode {
    /// Bias-corrected EMA of accepted estimates.
    EmaProxy,
    /// True `‖∇L(W)‖²` supplied after each accepted update (simulation only).
    Oracle,
}

#[derive(Debug, Clone)]
pub struct VistaConfig {
    pub b0: f64,
    pub c: f64,
    pub beta: f64,
    pub eta0: f64,
    pub curve: Arc<EquilibriumCurve>,
    pub mode: VistaMode,
}

impl VistaConfig {
    /// Uses the default initial threshold `(eta_min + eta_max) / 2`.
    pub fn new(b0: f64, c: f64, beta: f64, curve: Arc<EquilibriumCurve>, mode: VistaMode) -> Result<Self> {
        let eta0 = 0.5 * (curve.eta_min + curve.eta_max);
        let cfg = Self {
            b0,
            c,
            beta,
            eta0,
            curve,
            mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_eta0(mut self, eta0: f64) -> Result<Self> {
        self.eta0 = eta0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b0 > 0.0 && self.b0.is_finite()) {
            return Err(Error::Config(format!("b0 must be positive, got {}", self.b0)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("c must be positive, got {}", self.c)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if !(self.eta0 >= self.curve.eta_min && self.eta0 <= self.curve.eta_max) {
            return Err(Error::Config(format!(
                "eta0={} outside the curve range [{}, {}]",
                self.eta0, self.curve.eta_min, self.curve.eta_max
            )));
        }
        Ok(())
    }

    /// Whether `b0 <= 1 / (ℓ (1 + c))`; logs a warning in oracle mode when not.
    pub fn check_theorem_step(&self, smoothness: f64) -> bool {
        let bound = 1.0 / (smoothness * (1.0 + self.c));
        let ok = self.b0 <= bound;
        if !ok && self.mode == VistaMode::Oracle {
            tracing::warn!(b0 = self.b0, bound, "b0 exceeds the step bound of the convergence guarantee");
        }
        ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VistaState {
    pub w: ParamVector,
    pub m: ParamVector,
    pub g_tilde: ParamVector,
    /// Accepted rounds so far.
    pub u: u64,
    /// Accepted rounds played at `eta_min`.
    pub tau: u64,
    /// Threshold announced for the next round.
    pub eta: f64,
    pub last_b: f64,
}

/// What an accepted round did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptOutcome {
    pub b_applied: f64,
    pub saturated: bool,
    pub next_eta: f64,
}

#[derive(Debug, Clone)]
pub struct Vista {
    config: VistaConfig,
    state: VistaState,
}

impl Vista {
    pub fn init(config: VistaConfig, w_init: ParamVector) -> Result<Self> {
        config.validate()?;
        let d = w_init.dim();
        let state = VistaState {
            m: ParamVector::zeros(d),
            g_tilde: ParamVector::zeros(d),
            u: 0,
            tau: 0,
            eta: config.eta0,
            last_b: config.b0,
            w: w_init,
        };
        Ok(Self { config, state })
    }

    pub fn config(&self) -> &VistaConfig {
        &self.config
    }

    pub fn state(&self) -> &VistaState {
        &self.state
    }

    /// `b0 / sqrt(tau + 1)` with the counter entering the round.
    pub fn current_learning_rate(&self) -> f64 {
        self.config.b0 / ((self.state.tau + 1) as f64).sqrt()
    }

    /// Applies an accepted estimate and picks the next threshold.
    ///
    /// `oracle` must be supplied in oracle mode; it maps the updated iterate
    /// to its squared gradient norm.
    pub fn on_accepted(
        &mut self,
        g_hat: &ParamVector,
        oracle: Option<&dyn Fn(&ParamVector) -> f64>,
    ) -> Result<AcceptOutcome> {
        if g_hat.dim() != self.state.w.dim() {
            return Err(Error::Contract(format!(
                "estimate has dimension {}, iterate has {}",
                g_hat.dim(),
                self.state.w.dim()
            )));
        }
        if self.config.mode == VistaMode::Oracle && oracle.is_none() {
            return Err(Error::Contract("oracle mode requires the true gradient norm".into()));
        }
        let cfg = &self.config;
        let st = &mut self.state;

        let b = cfg.b0 / ((st.tau + 1) as f64).sqrt();
        st.w.axpy(-b, g_hat);
        st.u += 1;
        for (m, g) in st.m.iter_mut().zip(g_hat.iter()) {
            *m = cfg.beta * *m + (1.0 - cfg.beta) * g;
        }
        let correction = 1.0 - cfg.beta.powi(st.u.min(i32::MAX as u64) as i32);
        for (gt, m) in st.g_tilde.iter_mut().zip(st.m.iter()) {
            *gt = m / correction;
        }

        let saturated = st.eta == cfg.curve.eta_min;
        if saturated {
            st.tau += 1;
        }
        let proxy = match (cfg.mode, oracle) {
            (VistaMode::Oracle, Some(f)) => f(&st.w),
            _ => st.g_tilde.norm_sq(),
        };
        st.eta = cfg.curve.eta_for_target_mse(cfg.c * proxy);
        st.last_b = b;
        Ok(AcceptOutcome {
            b_applied: b,
            saturated,
            next_eta: st.eta,
        })
    }

    /// Rejected rounds leave every piece of state untouched.
    pub fn on_rejected(&mut self) {}
}

/// Fixed threshold; learning rate `b0 / sqrt(u + 1)` over accepted rounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantPolicy {
    pub eta_fixed: f64,
    pub b0: f64,
    pub eta_min: f64,
    pub w: ParamVector,
    pub u: u64,
}

impl ConstantPolicy {
    pub fn current_learning_rate(&self) -> f64 {
        self.b0 / ((self.u + 1) as f64).sqrt()
    }

    pub fn on_accepted(&mut self, g_hat: &ParamVector) -> Result<AcceptOutcome> {
        if g_hat.dim() != self.w.dim() {
            return Err(Error::Contract("estimate dimension mismatch".into()));
        }
        let b = self.current_learning_rate();
        self.w.axpy(-b, g_hat);
        self.u += 1;
        Ok(AcceptOutcome {
            b_applied: b,
            saturated: self.eta_fixed == self.eta_min,
            next_eta: self.eta_fixed,
        })
    }

    pub fn on_rejected(&mut self) {}
}

pub fn constant_policy(
    eta_fixed: f64,
    b0: f64,
    curve: &EquilibriumCurve,
    w_init: ParamVector,
) -> Result<ConstantPolicy> {
    if !(eta_fixed >= curve.eta_min && eta_fixed <= curve.eta_max) {
        return Err(Error::Config(format!(
            "eta_fixed={eta_fixed} outside the curve range [{}, {}]",
            curve.eta_min, curve.eta_max
        )));
    }
    if !(b0 > 0.0 && b0.is_finite()) {
        return Err(Error::Config(format!("b0 must be positive, got {b0}")));
    }
    Ok(ConstantPolicy {
        eta_fixed,
        b0,
        eta_min: curve.eta_min,
        w: w_init,
        u: 0,
    })
}

/// Either policy behind one interface for the round loop.
#[derive(Debug, Clone)]
pub enum Controller {
    Vista(Vista),
    Constant(ConstantPolicy),
}

impl Controller {
    pub fn eta(&self) -> f64 {
        match self {
            Controller::Vista(v) => v.state.eta,
            Controller::Constant(c) => c.eta_fixed,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match self {
            Controller::Vista(v) => v.current_learning_rate(),
            Controller::Constant(c) => c.current_learning_rate(),
        }
    }

    pub fn weights(&self) -> &ParamVector {
        match self {
            Controller::Vista(v) => &v.state.w,
            Controller::Constant(c) => &c.w,
        }
    }

    pub fn needs_oracle(&self) -> bool {
        matches!(self, Controller::Vista(v) if v.config.mode == VistaMode::Oracle)
    }

    pub fn on_accepted(
        &mut self,
        g_hat: &ParamVector,
        oracle: Option<&dyn Fn(&ParamVector) -> f64>,
    ) -> Result<AcceptOutcome> {
        match self {
            Controller::Vista(v) => v.on_accepted(g_hat, oracle),
            Controller::Constant(c) => c.on_accepted(g_hat),
        }
    }

    pub fn on_rejected(&mut self) {
        match self {
            Controller::Vista(v) => v.on_rejected(),
            Controller::Constant(c) => c.on_rejected(),
        }
    }
}
