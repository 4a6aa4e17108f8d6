//! Report generation for honest and adversarial nodes, and the pairwise
//! consistency test that decides whether a round is accepted.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::vector::dist_sq;
use crate::{Error, ParamVector, Result, ETA_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub n: usize,
    pub n_honest: usize,
    /// Honest noise bound Δ: `‖N‖₂ ≤ delta` for every honest report.
    pub delta: f64,
}

impl NetworkSpec {
    pub fn new(n: usize, n_honest: usize, delta: f64) -> Result<Self> {
        let net = Self { n, n_honest, delta };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_honest < 1 {
            return Err(Error::Config("network needs at least one honest node".into()));
        }
        if self.n_honest > self.n {
            return Err(Error::Config(format!(
                "n_honest={} exceeds n={}",
                self.n_honest, self.n
            )));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }

    pub fn n_adversarial(&self) -> usize {
        self.n - self.n_honest
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coordination {
    /// Every adversarial node reports the same noise realization.
    #[default]
    IdenticalCopies,
}

/// Radially symmetric adversary: noise `r·u` with `u` uniform on the unit
/// sphere (a uniform random sign when `d = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversaryStrategy {
    pub magnitude: f64,
    pub coordination: Coordination,
}

impl AdversaryStrategy {
    pub fn new(magnitude: f64) -> Result<Self> {
        if !(magnitude >= 0.0 && magnitude.is_finite()) {
            return Err(Error::Config(format!(
                "adversary magnitude must be finite and nonnegative, got {magnitude}"
            )));
        }
        Ok(Self {
            magnitude,
            coordination: Coordination::IdenticalCopies,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReports {
    /// Honest reports first, then adversarial ones.
    pub reports: Vec<ParamVector>,
    /// Kept for telemetry; the data collector never reads it.
    pub true_grad: ParamVector,
}

/// Uniform draw from the `d`-ball of radius `delta`, written into `out`.
pub(crate) fn fill_honest_noise<R: Rng + ?Sized>(out: &mut [f64], delta: f64, rng: &mut R) {
    let d = out.len();
    if d == 1 {
        out[0] = rng.random_range(-delta..=delta);
        return;
    }
    fill_direction(out, rng);
    let u: f64 = rng.random();
    let radius = delta * u.powf(1.0 / d as f64);
    out.iter_mut().for_each(|v| *v *= radius);
}

/// Uniform unit vector (random sign for `d = 1`), written into `out`.
pub(crate) fn fill_direction<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    if out.len() == 1 {
        out[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        return;
    }
    loop {
        let mut ss = 0.0;
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
            ss += *v * *v;
        }
        if ss > 1e-300 {
            let inv = 1.0 / ss.sqrt();
            out.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}

pub fn sample_honest_noise<R: Rng + ?Sized>(d: usize, delta: f64, rng: &mut R) -> Result<ParamVector> {
    if d == 0 {
        return Err(Error::Config("noise dimension must be >= 1".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    let mut n = ParamVector::zeros(d);
    fill_honest_noise(&mut n, delta, rng);
    Ok(n)
}

pub fn sample_adversarial_noise<R: Rng + ?Sized>(
    strategy: &AdversaryStrategy,
    d: usize,
    rng: &mut R,
) -> ParamVector {
    let mut n = ParamVector::zeros(d);
    if d == 0 {
        return n;
    }
    fill_direction(&mut n, rng);
    n.iter_mut().for_each(|v| *v *= strategy.magnitude);
    n
}

/// Reports for one round at true gradient `grad`: fresh independent honest
/// noise per honest node, one shared adversarial realization per round.
pub fn make_reports<R: Rng + ?Sized>(
    grad: &ParamVector,
    net: &NetworkSpec,
    strategy: &AdversaryStrategy,
    rng: &mut R,
) -> RoundReports {
    let d = grad.dim();
    let mut reports = Vec::with_capacity(net.n);
    let mut noise = vec![0.0; d];
    for _ in 0..net.n_honest {
        fill_honest_noise(&mut noise, net.delta, rng);
        reports.push(grad.iter().zip(&noise).map(|(g, e)| g + e).collect());
    }
    if net.n_adversarial() > 0 {
        let adv_noise = sample_adversarial_noise(strategy, d, rng);
        let adv: ParamVector = grad.iter().zip(adv_noise.iter()).map(|(g, e)| g + e).collect();
        for _ in 0..net.n_adversarial() {
            reports.push(adv.clone());
        }
    }
    RoundReports {
        reports,
        true_grad: grad.clone(),
    }
}

/// The single comparison used by every acceptance decision in the crate.
#[inline]
pub(crate) fn within_threshold(dist_sq: f64, eta: f64, delta: f64) -> bool {
    dist_sq.sqrt() <= eta * delta
}

pub fn max_pairwise_distance(reports: &[ParamVector]) -> f64 {
    let mut worst = 0.0_f64;
    for (i, a) in reports.iter().enumerate() {
        for b in &reports[i + 1..] {
            worst = worst.max(dist_sq(a, b));
        }
    }
    worst.sqrt()
}

/// Accepts iff every pair of reports is within `eta * delta` (ties accepted).
pub fn check_acceptance(reports: &RoundReports, eta: f64, delta: f64) -> Result<bool> {
    validate_threshold(eta)?;
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    let ys = &reports.reports;
    for (i, a) in ys.iter().enumerate() {
        for b in &ys[i + 1..] {
            if !within_threshold(dist_sq(a, b), eta, delta) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

pub(crate) fn validate_threshold(eta: f64) -> Result<()> {
    if eta < ETA_MIN || eta.is_nan() {
        return Err(Error::Policy(format!(
            "acceptance threshold {eta} is below the minimum {ETA_MIN}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rep(values: &[&[f64]]) -> RoundReports {
        RoundReports {
            reports: values.iter().map(|v| ParamVector::from(*v)).collect(),
            true_grad: ParamVector::zeros(values[0].len()),
        }
    }

    #[test]
    fn network_validation() {
        assert!(NetworkSpec::new(2, 1, 1.0).is_ok());
        assert!(NetworkSpec::new(2, 0, 1.0).is_err());
        assert!(NetworkSpec::new(2, 3, 1.0).is_err());
        assert!(NetworkSpec::new(2, 1, 0.0).is_err());
        assert_eq!(NetworkSpec::new(10, 1, 1.0).unwrap().n_adversarial(), 9);
        assert!(AdversaryStrategy::new(-1.0).is_err());
        assert!(AdversaryStrategy::new(f64::INFINITY).is_err());
    }

    #[test]
    fn honest_noise_support_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for d in 1..=5 {
            for _ in 0..10_000 {
                assert!(sample_honest_noise(d, 2.5, &mut rng).unwrap().norm() <= 2.5);
            }
        }
        assert!(sample_honest_noise(0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn honest_noise_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let delta = 1.0;
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| sample_honest_noise(1, delta, &mut rng).unwrap()[0])
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() <= 3.0 * (delta / 3f64.sqrt()) / 1e3, "mean {mean}");

        // E‖N‖² = d/(d+2)·Δ² for the uniform ball.
        let ms = (0..n)
            .map(|_| sample_honest_noise(3, delta, &mut rng).unwrap().norm_sq())
            .sum::<f64>()
            / n as f64;
        assert!((ms / 0.6 - 1.0).abs() < 0.01, "E|N|^2 {ms}");
    }

    #[test]
    fn adversarial_noise_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let zero = AdversaryStrategy::new(0.0).unwrap();
        assert_eq!(sample_adversarial_noise(&zero, 3, &mut rng).norm(), 0.0);

        let two = AdversaryStrategy::new(2.0).unwrap();
        let mut plus = 0usize;
        let draws = 100_000;
        for _ in 0..draws {
            let v = sample_adversarial_noise(&two, 1, &mut rng)[0];
            assert!(v == 2.0 || v == -2.0);
            plus += (v > 0.0) as usize;
        }
        assert!((plus as f64 / draws as f64 - 0.5).abs() <= 0.005);

        let one = AdversaryStrategy::new(1.0).unwrap();
        for _ in 0..10_000 {
            assert!((sample_adversarial_noise(&one, 3, &mut rng).norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn make_reports_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let grad = ParamVector::from([0.3, -1.0]);
        let net = NetworkSpec::new(3, 2, 1e-12).unwrap();
        let r = make_reports(&grad, &net, &AdversaryStrategy::new(0.0).unwrap(), &mut rng);
        assert_eq!(r.reports.len(), 3);
        for y in &r.reports {
            assert!(y.dist(&grad) <= 1e-12);
        }

        let net = NetworkSpec::new(2, 1, 1.0).unwrap();
        let strat = AdversaryStrategy::new(1.7).unwrap();
        let g1 = ParamVector::from([4.0]);
        for _ in 0..1000 {
            let r = make_reports(&g1, &net, &strat, &mut rng);
            assert!((r.reports[0][0] - 4.0).abs() <= 1.0);
            assert!(((r.reports[1][0] - 4.0).abs() - 1.7).abs() < 1e-12);
        }

        let net = NetworkSpec::new(10, 1, 1.0).unwrap();
        let r = make_reports(&g1, &net, &strat, &mut rng);
        assert!(r.reports[1..].iter().all(|y| y == &r.reports[1]));
        assert_eq!(r.true_grad, g1);
    }

    #[test]
    fn acceptance_examples() {
        assert!(check_acceptance(&rep(&[&[1.0], &[1.0], &[1.0]]), 2.0, 1.0).unwrap());
        assert!(!check_acceptance(&rep(&[&[0.0], &[3.0]]), 2.0, 1.0).unwrap());
        assert!(!check_acceptance(&rep(&[&[0.0], &[1.5], &[3.0]]), 2.0, 1.0).unwrap());
        // Distance exactly eta * delta is accepted.
        assert!(check_acceptance(&rep(&[&[0.0], &[2.0]]), 2.0, 1.0).unwrap());
        let err = check_acceptance(&rep(&[&[0.0], &[1.0]]), 1.5, 1.0).unwrap_err();
        assert!(matches!(err, Error::Policy(_)));
    }

    #[test]
    fn honest_only_always_accepted_in_1d() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = NetworkSpec::new(8, 8, 1.0).unwrap();
        let strat = AdversaryStrategy::new(50.0).unwrap();
        let g = ParamVector::from([-12.0]);
        for _ in 0..20_000 {
            let r = make_reports(&g, &net, &strat, &mut rng);
            assert!(check_acceptance(&r, 2.0, 1.0).unwrap());
        }
    }

    fn reports_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, f64)> {
        (1usize..=4, 2usize..=16).prop_flat_map(|(d, n)| {
            (
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n),
                2.0f64..6.0,
            )
        })
    }

    proptest! {
        #[test]
        fn acceptance_equals_pairwise_max((ys, eta) in reports_strategy()) {
            let reports: Vec<ParamVector> = ys.iter().map(|v| ParamVector::from(v.clone())).collect();
            let rr = RoundReports { true_grad: ParamVector::zeros(ys[0].len()), reports: reports.clone() };
            let mut brute = true;
            for a in &reports {
                for b in &reports {
                    let d: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                    brute &= d <= eta;
                }
            }
            prop_assert_eq!(check_acceptance(&rr, eta, 1.0).unwrap(), brute);
            prop_assert_eq!(max_pairwise_distance(&reports) <= eta, brute);
        }

        #[test]
        fn acceptance_invariant_under_noise_negation(
            (ys, eta) in reports_strategy(),
            g in prop::collection::vec(-3.0f64..3.0, 4),
        ) {
            let d = ys[0].len();
            let grad = ParamVector::from(g[..d].to_vec());
            let make = |sign: f64| RoundReports {
                true_grad: grad.clone(),
                reports: ys.iter().map(|n| grad.iter().zip(n).map(|(a, e)| a + sign * e).collect()).collect(),
            };
            prop_assert_eq!(
                check_acceptance(&make(1.0), eta, 1.0).unwrap(),
                check_acceptance(&make(-1.0), eta, 1.0).unwrap()
            );
        }
    }
}
