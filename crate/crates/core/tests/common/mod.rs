//! Fixtures shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::sync::Arc;

use vista_core::controller::VistaMode;
use vista_core::equilibrium::{tabulate_curve, uniform_grid, AdversaryUtility, EquilibriumCurve, SolverConfig};
use vista_core::estimator::EstimatorSpec;
use vista_core::harness::{Experiment, PolicySpec, Telemetry};
use vista_core::objectives::Objective;
use vista_core::workers::NetworkSpec;
use vista_core::ParamVector;

/// One honest node, one adversarial node, unit noise bound.
pub fn pair_network() -> NetworkSpec {
    NetworkSpec::new(2, 1, 1.0).unwrap()
}

pub fn solver(samples: usize) -> SolverConfig {
    SolverConfig {
        samples,
        ..SolverConfig::default()
    }
}

/// Equilibrium curve of the two-node game with `log MSE + lambda log PA`
/// in `dim` dimensions on `points` evenly spaced thresholds.
pub fn pair_curve(dim: usize, lambda: f64, eta_max: f64, points: usize, samples: usize, seed: u64) -> Arc<EquilibriumCurve> {
    network_curve(&pair_network(), dim, lambda, eta_max, points, samples, seed)
}

pub fn network_curve(
    net: &NetworkSpec,
    dim: usize,
    lambda: f64,
    eta_max: f64,
    points: usize,
    samples: usize,
    seed: u64,
) -> Arc<EquilibriumCurve> {
    let grid = uniform_grid(2.0, eta_max, points);
    let curve = tabulate_curve(
        &grid,
        &AdversaryUtility::log_log(lambda).unwrap(),
        net,
        &EstimatorSpec::mean(),
        dim,
        &solver(samples),
        seed,
    )
    .unwrap();
    Arc::new(curve)
}

pub fn vista(b0: f64, c: f64, mode: VistaMode) -> PolicySpec {
    PolicySpec::Vista {
        b0,
        c,
        beta: 0.9,
        eta0: None,
        mode,
    }
}

pub fn constant(b0: f64, eta_fixed: f64) -> PolicySpec {
    PolicySpec::Constant { b0, eta_fixed }
}

#[allow(clippy::too_many_arguments)]
pub fn experiment(
    objective: Objective,
    network: NetworkSpec,
    lambda: f64,
    policy: PolicySpec,
    curve: Arc<EquilibriumCurve>,
    w_init: &[f64],
    horizon: usize,
    runs: usize,
    master_seed: u64,
) -> Experiment {
    let exp = Experiment {
        label: policy.default_label(),
        objective,
        network,
        utility: AdversaryUtility::log_log(lambda).unwrap(),
        estimator: EstimatorSpec::mean(),
        policy,
        curve,
        w_init: ParamVector::from(w_init),
        horizon,
        runs,
        master_seed,
        telemetry: Telemetry::default(),
    };
    exp.validate().unwrap();
    exp
}

/// Honest-only curve: every report is honest, so the adversary plays 0.
pub fn honest_curve(dim: usize, delta: f64, points: usize) -> Arc<EquilibriumCurve> {
    let net = NetworkSpec::new(3, 3, delta).unwrap();
    let grid = uniform_grid(2.0, 10.0, points);
    Arc::new(
        tabulate_curve(
            &grid,
            &AdversaryUtility::log_log(0.1).unwrap(),
            &net,
            &EstimatorSpec::mean(),
            dim,
            &solver(10_000),
            1,
        )
        .unwrap(),
    )
}
