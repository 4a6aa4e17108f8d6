use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AdversaryUtility, EquilibriumCurve, EquilibriumPoint};
use crate::estimator::{EstimatorKind, EstimatorSpec};
use crate::seed::{derive_seed, rng_from_seed, Purpose};
use crate::vector::dist_sq;
use crate::workers::{fill_direction, fill_honest_noise, validate_threshold, within_threshold, NetworkSpec};
use crate::{Error, Result};

const MIN_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Points of the coarse magnitude grid over `[0, (eta + 1) delta]`.
    pub coarse_points: usize,
    /// Monte Carlo rounds per best response; shared by every candidate `r`.
    pub samples: usize,
    /// Golden-section iterations inside the best coarse bracket.
    pub refine_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            coarse_points: 128,
            samples: 100_000,
            refine_iters: 40,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < MIN_SAMPLES {
            return Err(Error::Config(format!(
                "solver needs at least {MIN_SAMPLES} samples, got {}",
                self.samples
            )));
        }
        if self.coarse_points < 3 {
            return Err(Error::Config("solver needs at least 3 coarse points".into()));
        }
        Ok(())
    }
}

/// Monte Carlo estimate of acceptance probability and conditional MSE for
/// one `(eta, r)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyEstimate {
    pub pa: f64,
    /// `None` when no sampled round was accepted.
    pub mse: Option<f64>,
    pub pa_stderr: f64,
    pub mse_stderr: f64,
    pub samples: usize,
    pub accepted: usize,
}

impl StrategyEstimate {
    pub fn utility(&self, u: &AdversaryUtility) -> f64 {
        match self.mse {
            Some(mse) => u.value(self.pa, mse),
            None => f64::NEG_INFINITY,
        }
    }

    pub fn utility_stderr(&self, u: &AdversaryUtility) -> f64 {
        u.stderr(self.pa, self.mse.unwrap_or(0.0), self.pa_stderr, self.mse_stderr)
    }
}

/// Pre-drawn honest noise and adversarial directions at `grad = 0`.
///
/// Reports and the mean estimator are translation equivariant, so acceptance
/// and estimation error do not depend on the gradient. Every candidate
/// magnitude is evaluated on the same bank, which makes the Monte Carlo
/// objective a deterministic function of `r`.
#[derive(Debug, Clone)]
pub struct SampleBank {
    dim: usize,
    net: NetworkSpec,
    est: EstimatorSpec,
    len: usize,
    honest: Vec<f64>,
    honest_sum: Vec<f64>,
    honest_spread_sq: Vec<f64>,
    directions: Vec<f64>,
}

impl SampleBank {
    pub fn draw<R: Rng + ?Sized>(
        net: &NetworkSpec,
        est: &EstimatorSpec,
        dim: usize,
        samples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        net.validate()?;
        if dim == 0 {
            return Err(Error::Config("dimension must be >= 1".into()));
        }
        let nh = net.n_honest;
        let mut honest = vec![0.0; samples * nh * dim];
        let mut honest_sum = vec![0.0; samples * dim];
        let mut honest_spread_sq = vec![0.0; samples];
        let mut directions = vec![0.0; samples * dim];
        for s in 0..samples {
            let block = &mut honest[s * nh * dim..(s + 1) * nh * dim];
            for k in 0..nh {
                fill_honest_noise(&mut block[k * dim..(k + 1) * dim], net.delta, rng);
            }
            let mut spread = 0.0_f64;
            for a in 0..nh {
                for b in a + 1..nh {
                    spread = spread.max(dist_sq(
                        &block[a * dim..(a + 1) * dim],
                        &block[b * dim..(b + 1) * dim],
                    ));
                }
            }
            honest_spread_sq[s] = spread;
            let sum = &mut honest_sum[s * dim..(s + 1) * dim];
            for k in 0..nh {
                for (acc, v) in sum.iter_mut().zip(&block[k * dim..(k + 1) * dim]) {
                    *acc += v;
                }
            }
            if net.n_adversarial() > 0 {
                fill_direction(&mut directions[s * dim..(s + 1) * dim], rng);
            }
        }
        Ok(Self {
            dim,
            net: *net,
            est: *est,
            len: samples,
            honest,
            honest_sum,
            honest_spread_sq,
            directions,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Honest noise of node `k` in sample `s`.
    pub fn honest_noise(&self, s: usize, k: usize) -> &[f64] {
        let d = self.dim;
        let base = (s * self.net.n_honest + k) * d;
        &self.honest[base..base + d]
    }

    /// Adversarial unit direction in sample `s`.
    pub fn direction(&self, s: usize) -> &[f64] {
        &self.directions[s * self.dim..(s + 1) * self.dim]
    }

    /// Acceptance and squared estimation error of sample `s` under magnitude `r`.
    pub(crate) fn sample_outcome(&self, s: usize, eta: f64, r: f64, adv: &mut [f64]) -> Option<f64> {
        let d = self.dim;
        let delta = self.net.delta;
        if !within_threshold(self.honest_spread_sq[s], eta, delta) {
            return None;
        }
        let n_adv = self.net.n_adversarial();
        if n_adv > 0 {
            for (a, u) in adv.iter_mut().zip(self.direction(s)) {
                *a = r * u;
            }
            for k in 0..self.net.n_honest {
                if !within_threshold(dist_sq(adv, self.honest_noise(s, k)), eta, delta) {
                    return None;
                }
            }
        } else {
            adv.iter_mut().for_each(|a| *a = 0.0);
        }
        let n = self.net.n as f64;
        let sum = &self.honest_sum[s * d..(s + 1) * d];
        let err_sq = match self.est.kind {
            EstimatorKind::Mean => sum
                .iter()
                .zip(adv.iter())
                .map(|(h, a)| {
                    let e = (h + n_adv as f64 * a) / n;
                    e * e
                })
                .sum(),
        };
        Some(err_sq)
    }

    pub fn evaluate(&self, eta: f64, r: f64) -> StrategyEstimate {
        let mut adv = vec![0.0; self.dim];
        let mut accepted = 0usize;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for s in 0..self.len {
            if let Some(e) = self.sample_outcome(s, eta, r, &mut adv) {
                accepted += 1;
                s1 += e;
                s2 += e * e;
            }
        }
        let n = self.len as f64;
        let pa = accepted as f64 / n;
        let pa_stderr = (pa * (1.0 - pa) / n).sqrt();
        let (mse, mse_stderr) = if accepted == 0 {
            (None, f64::NAN)
        } else {
            let m = s1 / accepted as f64;
            let var = if accepted > 1 {
                ((s2 - accepted as f64 * m * m) / (accepted as f64 - 1.0)).max(0.0)
            } else {
                0.0
            };
            (Some(m), (var / accepted as f64).sqrt())
        };
        StrategyEstimate {
            pa,
            mse,
            pa_stderr,
            mse_stderr,
            samples: self.len,
            accepted,
        }
    }
}

/// Monte Carlo acceptance probability and conditional MSE of the radial
/// strategy with magnitude `r` against threshold `eta`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_strategy<R: Rng + ?Sized>(
    eta: f64,
    r: f64,
    net: &NetworkSpec,
    est: &EstimatorSpec,
    d: usize,
    samples: usize,
    rng: &mut R,
) -> Result<StrategyEstimate> {
    validate_threshold(eta)?;
    if samples < MIN_SAMPLES {
        return Err(Error::Config(format!(
            "need at least {MIN_SAMPLES} samples, got {samples}"
        )));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::Config(format!("magnitude must be finite and >= 0, got {r}")));
    }
    Ok(SampleBank::draw(net, est, d, samples, rng)?.evaluate(eta, r))
}

fn point_from(eta: f64, r: f64, e: &StrategyEstimate) -> EquilibriumPoint {
    EquilibriumPoint {
        eta,
        pa: e.pa,
        mse: e.mse.unwrap_or(f64::NAN),
        r_star: r,
        mc_samples: e.samples,
        pa_stderr: e.pa_stderr,
        mse_stderr: e.mse_stderr,
    }
}

/// The adversary's utility-maximizing magnitude at threshold `eta`: coarse
/// grid over `[0, (eta + 1) delta]`, then golden-section refinement inside
/// the bracket around the best grid point. Magnitudes never accepted score
/// `-inf`.
pub fn best_response<R: Rng + ?Sized>(
    eta: f64,
    utility: &AdversaryUtility,
    net: &NetworkSpec,
    est: &EstimatorSpec,
    d: usize,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<EquilibriumPoint> {
    validate_threshold(eta)?;
    utility.validate()?;
    cfg.validate()?;
    let bank = SampleBank::draw(net, est, d, cfg.samples, rng)?;
    best_response_on(&bank, eta, utility, cfg)
}

pub(crate) fn best_response_on(
    bank: &SampleBank,
    eta: f64,
    utility: &AdversaryUtility,
    cfg: &SolverConfig,
) -> Result<EquilibriumPoint> {
    if bank.net.n_adversarial() == 0 {
        let e = bank.evaluate(eta, 0.0);
        return Ok(point_from(eta, 0.0, &e));
    }

    let r_hi = (eta + 1.0) * bank.net.delta;
    let step = r_hi / (cfg.coarse_points - 1) as f64;
    let mut best: Option<(f64, f64, StrategyEstimate)> = None;
    let consider = |r: f64, best: &mut Option<(f64, f64, StrategyEstimate)>| {
        let e = bank.evaluate(eta, r);
        let u = e.utility(utility);
        if u.is_finite() && best.as_ref().is_none_or(|(bu, _, _)| u > *bu) {
            *best = Some((u, r, e));
        }
        u
    };

    let mut best_k = None;
    let mut best_u = f64::NEG_INFINITY;
    for k in 0..cfg.coarse_points {
        let u = consider(k as f64 * step, &mut best);
        if u.is_finite() && u > best_u {
            best_u = u;
            best_k = Some(k);
        }
    }
    let Some(k) = best_k else {
        return Err(Error::Solver {
            eta,
            msg: "no magnitude on the coarse grid is ever accepted".into(),
        });
    };

    // Golden section (maximization) on [r_{k-1}, r_{k+1}].
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = k.saturating_sub(1) as f64 * step;
    let mut b = ((k + 1).min(cfg.coarse_points - 1)) as f64 * step;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = consider(x1, &mut best);
    let mut f2 = consider(x2, &mut best);
    for _ in 0..cfg.refine_iters {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = consider(x1, &mut best);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = consider(x2, &mut best);
        }
    }

    let (_, r, e) = best.expect("grid produced a finite utility");
    Ok(point_from(eta, r, &e))
}

/// `points` evenly spaced values from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| {
                if i + 1 == points {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (points - 1) as f64
                }
            })
            .collect(),
    }
}

/// Best response at every grid threshold, then an isotonic projection of
/// the acceptance-probability and MSE columns.
///
/// Grid point `i` draws from a generator keyed on `(seed, i)`, so the curve
/// does not depend on thread scheduling.
pub fn tabulate_curve(
    eta_grid: &[f64],
    utility: &AdversaryUtility,
    net: &NetworkSpec,
    est: &EstimatorSpec,
    d: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<EquilibriumCurve> {
    if eta_grid.is_empty() {
        return Err(Error::Config("eta grid is empty".into()));
    }
    if eta_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("eta grid must be strictly increasing".into()));
    }
    validate_threshold(eta_grid[0])?;
    utility.validate()?;
    cfg.validate()?;
    net.validate()?;

    let points = eta_grid
        .par_iter()
        .enumerate()
        .map(|(i, &eta)| {
            let mut rng = rng_from_seed(derive_seed(seed, &[Purpose::Tabulate as u64, i as u64]));
            best_response(eta, utility, net, est, d, cfg, &mut rng).map_err(|e| match e {
                Error::Solver { .. } => e,
                other => Error::Solver {
                    eta,
                    msg: other.to_string(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EquilibriumCurve::smoothed(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workers::{check_acceptance, RoundReports};
    use crate::ParamVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(n: usize, nh: usize) -> NetworkSpec {
        NetworkSpec::new(n, nh, 1.0).unwrap()
    }

    #[test]
    fn bank_matches_generic_report_path() {
        // Rebuild each sampled round as explicit reports and push it through
        // check_acceptance and the estimator.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (n, nh, d) in [(2, 1, 1), (5, 2, 3), (4, 4, 2), (10, 3, 2)] {
            let network = net(n, nh);
            let est = EstimatorSpec::mean();
            let bank = SampleBank::draw(&network, &est, d, 2_000, &mut rng).unwrap();
            let mut adv = vec![0.0; d];
            for &(eta, r) in &[(2.0, 0.5), (3.0, 2.5), (2.0, 3.0), (6.0, 1.0)] {
                for s in 0..bank.len() {
                    let mut reports: Vec<ParamVector> =
                        (0..nh).map(|k| ParamVector::from(bank.honest_noise(s, k))).collect();
                    let a: ParamVector = bank.direction(s).iter().map(|u| r * u).collect();
                    for _ in nh..n {
                        reports.push(a.clone());
                    }
                    let rr = RoundReports { true_grad: ParamVector::zeros(d), reports };
                    let acc = check_acceptance(&rr, eta, 1.0).unwrap();
                    let fast = bank.sample_outcome(s, eta, r, &mut adv);
                    assert_eq!(acc, fast.is_some(), "n={n} d={d} s={s}");
                    if let Some(e) = fast {
                        let g = est.estimate(&rr).unwrap();
                        assert!((g.norm_sq() - e).abs() <= 1e-12 * (1.0 + e));
                    }
                }
            }
        }
    }

    #[test]
    fn evaluate_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let est = EstimatorSpec::mean();
        let e = evaluate_strategy(2.0, 0.0, &net(2, 1), &est, 1, 20_000, &mut rng).unwrap();
        assert_eq!(e.pa, 1.0);
        let eta = 2.0;
        let e = evaluate_strategy(eta, eta + 1.0 + 0.1, &net(2, 1), &est, 1, 20_000, &mut rng).unwrap();
        assert_eq!(e.pa, 0.0);
        assert!(e.mse.is_none());
        assert_eq!(e.utility(&AdversaryUtility::log_log(0.1).unwrap()), f64::NEG_INFINITY);

        assert!(evaluate_strategy(1.0, 0.0, &net(2, 1), &est, 1, 20_000, &mut rng).is_err());
        assert!(evaluate_strategy(2.0, 0.0, &net(2, 1), &est, 1, 100, &mut rng).is_err());
        assert!(evaluate_strategy(2.0, -1.0, &net(2, 1), &est, 1, 20_000, &mut rng).is_err());
    }

    #[test]
    fn always_accepted_mse_matches_closed_form() {
        // (r² + Δ²/3) / 4 with r = 1, Δ = 1.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = evaluate_strategy(4.0, 1.0, &net(2, 1), &EstimatorSpec::mean(), 1, 1_000_000, &mut rng)
            .unwrap();
        assert_eq!(e.pa, 1.0);
        let mse = e.mse.unwrap();
        assert!((mse - 1.0 / 3.0).abs() <= 3.0 * e.mse_stderr, "{mse} ± {}", e.mse_stderr);
    }

    #[test]
    fn large_lambda_prefers_acceptance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = AdversaryUtility::log_log(1e6).unwrap();
        let p = best_response(2.0, &u, &net(2, 1), &EstimatorSpec::mean(), 1, &SolverConfig::default(), &mut rng)
            .unwrap();
        assert_eq!(p.pa, 1.0);
        // Always-accepted magnitudes satisfy r <= (eta - 1) delta; a finite
        // bank cannot resolve rejections much rarer than 1 / samples.
        assert!(p.r_star <= 1.0 + 1e-4, "r* = {}", p.r_star);
    }

    #[test]
    fn honest_only_network_returns_zero_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = AdversaryUtility::log_log(0.1).unwrap();
        let p = best_response(3.0, &u, &net(3, 3), &EstimatorSpec::mean(), 1, &SolverConfig::default(), &mut rng)
            .unwrap();
        assert_eq!((p.r_star, p.pa), (0.0, 1.0));
    }

    #[test]
    fn solver_config_validation() {
        let mut cfg = SolverConfig::default();
        cfg.samples = 10;
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig {
            coarse_points: 2,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn grid_helper() {
        assert_eq!(uniform_grid(2.0, 60.0, 1), vec![2.0]);
        let g = uniform_grid(2.0, 60.0, 117);
        assert_eq!((g[0], g[116], g[2]), (2.0, 60.0, 3.0));
    }

    #[test]
    fn tabulate_rejects_bad_grids() {
        let u = AdversaryUtility::log_log(0.1).unwrap();
        let cfg = SolverConfig::default();
        let est = EstimatorSpec::mean();
        assert!(tabulate_curve(&[], &u, &net(2, 1), &est, 1, &cfg, 0).is_err());
        assert!(tabulate_curve(&[3.0, 2.5], &u, &net(2, 1), &est, 1, &cfg, 0).is_err());
        assert!(tabulate_curve(&[1.0, 2.5], &u, &net(2, 1), &est, 1, &cfg, 0).is_err());
    }
}
