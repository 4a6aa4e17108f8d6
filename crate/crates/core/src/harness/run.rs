use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Experiment, ExperimentEcho};
use crate::controller::Controller;
use crate::seed::{round_rng, run_seed};
use crate::vector::dist_sq;
use crate::workers::{check_acceptance, make_reports, AdversaryStrategy};
use crate::{Error, ParamVector, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub eta_applied: f64,
    /// Learning rate in force this round (applied only if accepted).
    pub b_applied: f64,
    pub accepted: bool,
    pub saturated: bool,
    /// `L(W_t)` after the round.
    pub loss: f64,
    /// `‖∇L(W_{t-1})‖²` at the iterate the reports were computed for.
    pub grad_norm_sq: f64,
    /// `‖Ĝ − ∇L‖²`, accepted rounds only.
    pub est_err_sq: Option<f64>,
    pub r_star_applied: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_loss: f64,
    pub final_grad_norm_sq: f64,
    pub min_grad_norm_sq: f64,
    pub accepted: usize,
    pub saturated: usize,
    pub accept_rate: f64,
    /// First round played (and accepted) at `eta_min`.
    pub saturation_entry: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub label: String,
    pub b0: f64,
    pub eta_min: f64,
    /// True for VISTA, whose learning rate only moves after saturated rounds.
    pub policy_decays_on_saturation: bool,
    pub initial_loss: f64,
    pub rounds: Vec<RoundRecord>,
    pub final_w: ParamVector,
    pub summary: RunSummary,
    /// First round whose iterate left the objective's certified region.
    pub left_region_at: Option<usize>,
}

/// Runs one trajectory of `exp.horizon` rounds; fully determined by
/// `(exp, seed)`.
pub fn run_single(exp: &Experiment, seed: u64) -> Result<RunRecord> {
    let obj = &exp.objective;
    let curve = &exp.curve;
    let mut ctrl = exp.build_controller()?;
    let decays_on_saturation = matches!(ctrl, Controller::Vista(_));
    let oracle = |w: &ParamVector| obj.grad(w).map(|g| g.norm_sq()).unwrap_or(f64::NAN);

    let initial_loss = obj.value(&exp.w_init)?;
    let mut rounds = Vec::with_capacity(exp.horizon);
    let mut left_region_at = None;
    for t in 0..exp.horizon {
        let grad = obj.grad(ctrl.weights())?;
        let grad_norm_sq = grad.norm_sq();
        let eta = ctrl.eta();
        let b = ctrl.learning_rate();
        let r_star = curve.r_star_of_eta(eta);
        let strategy = AdversaryStrategy::new(r_star)?;
        let mut rng = round_rng(seed, t as u64);
        let reports = make_reports(&grad, &exp.network, &strategy, &mut rng);
        let accepted = check_acceptance(&reports, eta, exp.network.delta)?;
        let (saturated, est_err_sq) = if accepted {
            let g_hat = exp.estimator.estimate(&reports)?;
            let err = dist_sq(&g_hat, &grad);
            let oracle_ref: Option<&dyn Fn(&ParamVector) -> f64> =
                if ctrl.needs_oracle() { Some(&oracle) } else { None };
            let out = ctrl.on_accepted(&g_hat, oracle_ref)?;
            (out.saturated, Some(err))
        } else {
            ctrl.on_rejected();
            (false, None)
        };
        let w = ctrl.weights();
        let loss = obj.value(w)?;
        if left_region_at.is_none() && !obj.in_region(w) {
            tracing::warn!(seed, t, objective = %obj.name, "iterate left the certified region");
            left_region_at = Some(t);
        }
        rounds.push(RoundRecord {
            t,
            eta_applied: eta,
            b_applied: b,
            accepted,
            saturated,
            loss,
            grad_norm_sq,
            est_err_sq,
            r_star_applied: r_star,
        });
    }
    let summary = summarize(&rounds);
    Ok(RunRecord {
        seed,
        label: exp.label.clone(),
        b0: exp.policy.b0(),
        eta_min: curve.eta_min,
        policy_decays_on_saturation: decays_on_saturation,
        initial_loss,
        rounds,
        final_w: ctrl.weights().clone(),
        summary,
        left_region_at,
    })
}

fn summarize(rounds: &[RoundRecord]) -> RunSummary {
    let last = rounds.last().expect("horizon >= 1");
    let accepted = rounds.iter().filter(|r| r.accepted).count();
    RunSummary {
        final_loss: last.loss,
        final_grad_norm_sq: last.grad_norm_sq,
        min_grad_norm_sq: rounds.iter().map(|r| r.grad_norm_sq).fold(f64::INFINITY, f64::min),
        accepted,
        saturated: rounds.iter().filter(|r| r.saturated).count(),
        accept_rate: accepted as f64 / rounds.len() as f64,
        saturation_entry: rounds.iter().position(|r| r.saturated),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub t: usize,
    pub mean_loss: f64,
    pub std_loss: f64,
    pub mean_gradsq: f64,
    pub std_gradsq: f64,
    pub mean_eta: f64,
    pub accept_rate: f64,
    pub saturate_rate: f64,
    pub mean_b: f64,
}

/// Per-round statistics across runs; standard deviations use `n − 1` and
/// are zero for a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub label: String,
    pub runs: usize,
    /// Trailing moving-average window applied per run before aggregation.
    pub window: Option<usize>,
    pub rows: Vec<AggregateRow>,
}

impl AggregateRecord {
    pub fn final_row(&self) -> &AggregateRow {
        self.rows.last().expect("aggregate has at least one row")
    }

    pub fn row(&self, t: usize) -> Option<&AggregateRow> {
        self.rows.get(t)
    }

    pub fn mean_gradsq_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mean_gradsq).collect()
    }
}

const COLS: usize = 6;

fn columns(r: &RoundRecord) -> [f64; COLS] {
    [
        r.loss,
        r.grad_norm_sq,
        r.eta_applied,
        r.accepted as u8 as f64,
        r.saturated as u8 as f64,
        r.b_applied,
    ]
}

fn check_runs(runs: &[RunRecord]) -> Result<usize> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Config("cannot aggregate zero runs".into()))?;
    let horizon = first.rounds.len();
    if horizon == 0 || runs.iter().any(|r| r.rounds.len() != horizon) {
        return Err(Error::Config("runs must share a nonzero horizon".into()));
    }
    Ok(horizon)
}

fn aggregate_rows(n_runs: usize, horizon: usize, value: impl Fn(usize, usize) -> [f64; COLS]) -> Vec<AggregateRow> {
    let n = n_runs as f64;
    let mut vals = vec![[0.0; COLS]; n_runs];
    (0..horizon)
        .map(|t| {
            let mut mean = [0.0; COLS];
            for (i, v) in vals.iter_mut().enumerate() {
                *v = value(i, t);
                for c in 0..COLS {
                    mean[c] += v[c];
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let std = |c: usize| {
                if n_runs < 2 {
                    return 0.0;
                }
                let ss: f64 = vals.iter().map(|v| (v[c] - mean[c]).powi(2)).sum();
                (ss / (n - 1.0)).sqrt()
            };
            AggregateRow {
                t,
                mean_loss: mean[0],
                std_loss: std(0),
                mean_gradsq: mean[1],
                std_gradsq: std(1),
                mean_eta: mean[2],
                accept_rate: mean[3],
                saturate_rate: mean[4],
                mean_b: mean[5],
            }
        })
        .collect()
}

/// Reduces runs in the given order, so the result does not depend on the
/// order in which they finished.
pub fn aggregate(label: &str, runs: &[RunRecord]) -> Result<AggregateRecord> {
    let horizon = check_runs(runs)?;
    Ok(AggregateRecord {
        label: label.to_owned(),
        runs: runs.len(),
        window: None,
        rows: aggregate_rows(runs.len(), horizon, |i, t| columns(&runs[i].rounds[t])),
    })
}

/// Like [`aggregate`], after a trailing moving average of width `window`
/// over each run's series.
pub fn aggregate_moving_average(label: &str, runs: &[RunRecord], window: usize) -> Result<AggregateRecord> {
    let horizon = check_runs(runs)?;
    if window == 0 {
        return Err(Error::Config("moving-average window must be >= 1".into()));
    }
    let smoothed: Vec<Vec<[f64; COLS]>> = runs
        .iter()
        .map(|run| {
            let mut acc = [0.0; COLS];
            let mut out = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let add = columns(&run.rounds[t]);
                for c in 0..COLS {
                    acc[c] += add[c];
                }
                if t >= window {
                    let drop = columns(&run.rounds[t - window]);
                    for c in 0..COLS {
                        acc[c] -= drop[c];
                    }
                }
                let k = (t + 1).min(window) as f64;
                out.push(acc.map(|v| v / k));
            }
            out
        })
        .collect();
    Ok(AggregateRecord {
        label: label.to_owned(),
        runs: runs.len(),
        window: Some(window),
        rows: aggregate_rows(runs.len(), horizon, |i, t| smoothed[i][t]),
    })
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub echo: ExperimentEcho,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunRecord>,
    pub aggregate: AggregateRecord,
    pub moving_average: Option<AggregateRecord>,
}

/// `exp.runs` runs with seeds derived from `(master_seed, run index)`.
pub fn run_batch(exp: &Experiment) -> Result<BatchResult> {
    let seeds: Vec<u64> = (0..exp.runs as u64).map(|i| run_seed(exp.master_seed, i)).collect();
    run_batch_with_seeds(exp, &seeds)
}

/// Runs concurrently; results keep the order of `seeds`.
pub fn run_batch_with_seeds(exp: &Experiment, seeds: &[u64]) -> Result<BatchResult> {
    exp.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("batch needs at least one seed".into()));
    }
    let runs = seeds
        .par_iter()
        .map(|&s| run_single(exp, s))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate(&exp.label, &runs)?;
    let moving_average = exp
        .telemetry
        .ma_window
        .map(|w| aggregate_moving_average(&exp.label, &runs, w))
        .transpose()?;
    let mut echo = exp.echo();
    echo.runs = seeds.len();
    Ok(BatchResult {
        echo,
        seeds: seeds.to_vec(),
        runs,
        aggregate,
        moving_average,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub label: String,
    pub final_mean_gradsq: f64,
    pub final_std_gradsq: f64,
    pub final_mean_loss: f64,
    pub final_std_loss: f64,
    pub runs: usize,
}

/// Aligned per-round aggregates of several policies on a shared setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub horizon: usize,
    pub columns: Vec<AggregateRecord>,
    /// Ascending final mean squared gradient norm.
    pub ranking: Vec<RankEntry>,
}

pub fn compare(batches: &[BatchResult]) -> Result<Comparison> {
    let first = batches
        .first()
        .ok_or_else(|| Error::Config("compare needs at least one batch".into()))?;
    let base = &first.echo;
    for b in &batches[1..] {
        let e = &b.echo;
        let mismatch = if e.objective != base.objective {
            Some("objective")
        } else if e.network != base.network {
            Some("network")
        } else if e.utility != base.utility {
            Some("utility")
        } else if e.horizon != base.horizon {
            Some("horizon")
        } else {
            None
        };
        if let Some(field) = mismatch {
            return Err(Error::Config(format!(
                "cannot compare {} with {}: {field} differs",
                base.label, e.label
            )));
        }
    }
    let mut labels: Vec<&str> = batches.iter().map(|b| b.echo.label.as_str()).collect();
    labels.sort_unstable();
    if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("duplicate policy label {}", w[0])));
    }
    let mut ranking: Vec<RankEntry> = batches
        .iter()
        .map(|b| {
            let f = b.aggregate.final_row();
            RankEntry {
                label: b.echo.label.clone(),
                final_mean_gradsq: f.mean_gradsq,
                final_std_gradsq: f.std_gradsq,
                final_mean_loss: f.mean_loss,
                final_std_loss: f.std_loss,
                runs: b.aggregate.runs,
            }
        })
        .collect();
    ranking.sort_by(|a, b| a.final_mean_gradsq.total_cmp(&b.final_mean_gradsq));
    Ok(Comparison {
        horizon: base.horizon,
        columns: batches.iter().map(|b| b.aggregate.clone()).collect(),
        ranking,
    })
}
