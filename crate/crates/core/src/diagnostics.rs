//! Executable forms of the convergence-proof invariants.
//!
//! Pathwise checks run on recorded [`RunRecord`]s with zero tolerance. The
//! descent probe and the rate statistic are Monte Carlo checks with explicit
//! standard-error margins.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumCurve;
use crate::estimator::EstimatorSpec;
use crate::harness::RunRecord;
use crate::objectives::Objective;
use crate::workers::{check_acceptance, make_reports, AdversaryStrategy, NetworkSpec};
use crate::{Error, ParamVector, Result};

/// Minimum fresh rounds per descent probe.
pub const MIN_PROBE_SAMPLES: usize = 100_000;
/// Below this many accepted rounds a probe is reported inconclusive.
const MIN_PROBE_ACCEPTED: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicReport {
    pub sum: f64,
    pub bound: f64,
    pub slack: f64,
    pub saturated_rounds: usize,
}

/// Checks `Σ_{k≤t} sat_k B_k² ≤ b0² (1 + ln(t + 2))` on every prefix
/// (prefix of `t + 1` rounds) and reports the slack of the full run.
pub fn check_harmonic_bound(run: &RunRecord, b0: f64) -> Result<HarmonicReport> {
    let b0_sq = b0 * b0;
    let mut sum = 0.0;
    let mut saturated_rounds = 0;
    for (t, r) in run.rounds.iter().enumerate() {
        if r.saturated {
            sum += r.b_applied * r.b_applied;
            saturated_rounds += 1;
        }
        let bound = b0_sq * (1.0 + ((t + 2) as f64).ln());
        if sum > bound {
            return Err(Error::Invariant(format!(
                "harmonic bound violated on prefix ending at round {t} (seed {}): {sum} > {bound}",
                run.seed
            )));
        }
    }
    let bound = b0_sq * (1.0 + ((run.rounds.len() + 1) as f64).ln());
    Ok(HarmonicReport {
        sum,
        bound,
        slack: bound - sum,
        saturated_rounds,
    })
}

/// Checks `B_t ≥ b0 / sqrt(t + 1)` at every round; returns the smallest
/// ratio `B_t / floor_t`.
pub fn check_lr_floor(run: &RunRecord, b0: f64) -> Result<f64> {
    let mut min_ratio = f64::INFINITY;
    for (t, r) in run.rounds.iter().enumerate() {
        let floor = b0 / ((t + 1) as f64).sqrt();
        if r.b_applied < floor {
            return Err(Error::Invariant(format!(
                "learning rate {} below floor {floor} at round {t} (seed {})",
                r.b_applied, run.seed
            )));
        }
        min_ratio = min_ratio.min(r.b_applied / floor);
    }
    Ok(min_ratio)
}

/// Round conservation and flag consistency: `saturated` only on accepted
/// rounds played at `eta_min`, estimation error present iff accepted.
pub fn check_counter_coupling(run: &RunRecord, horizon: Option<usize>) -> Result<()> {
    if let Some(h) = horizon {
        if run.rounds.len() != h {
            return Err(Error::Invariant(format!(
                "run {} has {} rounds, expected {h}",
                run.seed,
                run.rounds.len()
            )));
        }
    }
    for (t, r) in run.rounds.iter().enumerate() {
        if r.t != t {
            return Err(Error::Invariant(format!("round index {} recorded at position {t}", r.t)));
        }
        if r.saturated != (r.accepted && r.eta_applied == run.eta_min) {
            return Err(Error::Invariant(format!(
                "saturation flag inconsistent at round {t} (seed {})",
                run.seed
            )));
        }
        if r.est_err_sq.is_some() != r.accepted {
            return Err(Error::Invariant(format!(
                "estimation error recorded inconsistently at round {t} (seed {})",
                run.seed
            )));
        }
    }
    // The decay counter can only advance on saturated rounds.
    for (t, pair) in run.rounds.windows(2).enumerate() {
        if pair[1].b_applied != pair[0].b_applied && !pair[0].saturated && run.policy_decays_on_saturation {
            return Err(Error::Invariant(format!(
                "learning rate changed after unsaturated round {t} (seed {})",
                run.seed
            )));
        }
    }
    Ok(())
}

/// Rejected rounds leave the iterate untouched: the loss equals the previous
/// round's and the next round sees the same gradient norm.
pub fn check_frozen_on_reject(run: &RunRecord) -> Result<()> {
    let mut prev_loss = run.initial_loss;
    for (t, r) in run.rounds.iter().enumerate() {
        if !r.accepted {
            if r.loss.to_bits() != prev_loss.to_bits() {
                return Err(Error::Invariant(format!(
                    "loss moved on rejected round {t} (seed {})",
                    run.seed
                )));
            }
            if let Some(next) = run.rounds.get(t + 1) {
                if next.grad_norm_sq.to_bits() != r.grad_norm_sq.to_bits() {
                    return Err(Error::Invariant(format!(
                        "iterate moved on rejected round {t} (seed {})",
                        run.seed
                    )));
                }
            }
        }
        prev_loss = r.loss;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

impl CheckOutcome {
    fn from_result<T>(r: Result<T>) -> Self {
        match r {
            Ok(_) => Self {
                passed: true,
                detail: None,
            },
            Err(e) => Self {
                passed: false,
                detail: Some(e.to_string()),
            },
        }
    }
}

/// Machine-readable verdict of every pathwise check on one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunVerdict {
    pub seed: u64,
    pub harmonic: CheckOutcome,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub harmonic_slack: Option<f64>,
    pub lr_floor: CheckOutcome,
    pub counter_coupling: CheckOutcome,
    pub frozen_on_reject: CheckOutcome,
    pub passed: bool,
}

pub fn check_run(run: &RunRecord) -> RunVerdict {
    let harmonic = check_harmonic_bound(run, run.b0);
    let harmonic_slack = harmonic.as_ref().ok().map(|h| h.slack);
    let harmonic = CheckOutcome::from_result(harmonic);
    let lr_floor = CheckOutcome::from_result(check_lr_floor(run, run.b0));
    let counter_coupling = CheckOutcome::from_result(check_counter_coupling(run, None));
    let frozen_on_reject = CheckOutcome::from_result(check_frozen_on_reject(run));
    let passed = harmonic.passed && lr_floor.passed && counter_coupling.passed && frozen_on_reject.passed;
    RunVerdict {
        seed: run.seed,
        harmonic,
        harmonic_slack,
        lr_floor,
        counter_coupling,
        frozen_on_reject,
        passed,
    }
}

/// One Monte Carlo evaluation of the one-step descent inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentProbe {
    /// Monte Carlo mean of `L(W_t)` from the fixed state.
    pub estimate: f64,
    pub stderr: f64,
    /// Right-hand side evaluated with curve values of `p` and `σ²`.
    pub bound: f64,
    /// Standard error of the bound inherited from the curve.
    pub bound_stderr: f64,
    /// `bound + 4 * combined stderr - estimate`; negative means violated.
    pub slack: f64,
    pub accepted: usize,
    pub samples: usize,
    pub inconclusive: bool,
}

impl DescentProbe {
    pub fn holds(&self) -> bool {
        self.slack >= 0.0
    }
}

/// Compares the Monte Carlo mean of `L(W_t)` after one round from `w` at
/// threshold `eta` and step `b` against
/// `L(w) − b p (1 − ℓb/2) ‖∇L(w)‖² + (ℓ b² / 2) p σ²`.
#[allow(clippy::too_many_arguments)]
pub fn check_descent_inequality<R: Rng + ?Sized>(
    objective: &Objective,
    w: &ParamVector,
    eta: f64,
    b: f64,
    curve: &EquilibriumCurve,
    net: &NetworkSpec,
    est: &EstimatorSpec,
    samples: usize,
    rng: &mut R,
) -> Result<DescentProbe> {
    if samples < MIN_PROBE_SAMPLES {
        return Err(Error::Config(format!(
            "descent probe needs at least {MIN_PROBE_SAMPLES} samples, got {samples}"
        )));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::Config(format!("step size must be positive, got {b}")));
    }
    let grad = objective.grad(w)?;
    let l0 = objective.value(w)?;
    let strategy = AdversaryStrategy::new(curve.r_star_of_eta(eta))?;

    let mut next = w.clone();
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut accepted = 0;
    for _ in 0..samples {
        let reports = make_reports(&grad, net, &strategy, rng);
        let loss = if check_acceptance(&reports, eta, net.delta)? {
            accepted += 1;
            let g_hat = est.estimate(&reports)?;
            next.copy_from_slice(w);
            next.axpy(-b, &g_hat);
            objective.value(&next)?
        } else {
            l0
        };
        // Centering on L(w) keeps the variance accumulation well conditioned.
        let x = loss - l0;
        s1 += x;
        s2 += x * x;
    }
    let n = samples as f64;
    let mean = s1 / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    let stderr = (var / n).sqrt();
    let estimate = l0 + mean;

    let ell = objective.smoothness;
    let p = curve.pa_of_eta(eta);
    let sigma2 = curve.mse_of_eta(eta);
    let g2 = grad.norm_sq();
    let descent_coef = b * (1.0 - ell * b / 2.0);
    let noise_coef = ell * b * b / 2.0;
    let bound = l0 - descent_coef * p * g2 + noise_coef * p * sigma2;
    let (p_se, s_se) = curve.stderrs_of_eta(eta);
    let d_dp = -descent_coef * g2 + noise_coef * sigma2;
    let d_ds = noise_coef * p;
    let bound_stderr = ((d_dp * p_se).powi(2) + (d_ds * s_se).powi(2)).sqrt();
    let combined = (stderr * stderr + bound_stderr * bound_stderr).sqrt();

    Ok(DescentProbe {
        estimate,
        stderr,
        bound,
        bound_stderr,
        slack: bound + 4.0 * combined - estimate,
        accepted,
        samples,
        inconclusive: accepted < MIN_PROBE_ACCEPTED,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCheckpoint {
    pub t: usize,
    /// Running minimum of the mean squared gradient norm over the first `t` rounds.
    pub running_min: f64,
    /// `running_min * sqrt(t) / ln(t)`.
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub checkpoints: Vec<RateCheckpoint>,
    pub max: f64,
    pub factor: f64,
    pub passed: bool,
}

impl RateFit {
    pub fn ensure(&self) -> Result<()> {
        if self.passed {
            return Ok(());
        }
        let detail: Vec<String> = self
            .checkpoints
            .iter()
            .map(|c| format!("t={}: {:.6e}", c.t, c.statistic))
            .collect();
        Err(Error::Invariant(format!(
            "rate statistic grows by more than {} between checkpoints: {}",
            self.factor,
            detail.join(", ")
        )))
    }
}

/// Envelope check of the `ln T / sqrt T` rate on a per-round mean squared
/// gradient norm series at checkpoints `T/8, T/4, T/2, T`.
pub fn rate_fit(mean_grad_norm_sq: &[f64], factor: f64) -> Result<RateFit> {
    let horizon = mean_grad_norm_sq.len();
    if horizon < 16 {
        return Err(Error::Config(format!(
            "rate check needs a horizon of at least 16 rounds, got {horizon}"
        )));
    }
    let checkpoints: Vec<RateCheckpoint> = [horizon / 8, horizon / 4, horizon / 2, horizon]
        .into_iter()
        .map(|t| {
            let running_min = mean_grad_norm_sq[..t].iter().copied().fold(f64::INFINITY, f64::min);
            let tf = t as f64;
            RateCheckpoint {
                t,
                running_min,
                statistic: running_min * tf.sqrt() / tf.ln(),
            }
        })
        .collect();
    let passed = checkpoints
        .windows(2)
        .all(|w| w[1].statistic <= factor * w[0].statistic);
    let max = checkpoints.iter().map(|c| c.statistic).fold(f64::NEG_INFINITY, f64::max);
    Ok(RateFit {
        checkpoints,
        max,
        factor,
        passed,
    })
}
