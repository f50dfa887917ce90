//! Experimental protocol: reference optima, tuning grids, error metrics,
//! time-to-threshold and aggregated convergence curves.

mod report;
mod tune;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::methods::{
    run_blm, run_method, InstanceOracle, LogRow, MethodConfig, MethodError, MethodId, RunResult, StoppingCriterion, Termination,
};
use crate::model::Instance;
use crate::oracle::{brute_force_dual_opt_in, warm_start, OracleError, OracleOptions, PriceBox};

pub use report::{
    run_benchmark, BenchConfig, BenchmarkReport, CheckpointError, GeometricMean, MethodCurve, ReportCell, DEFAULT_BUDGET, DEFAULT_THRESHOLD,
};
pub use tune::{tune, FineScale, Stage, Trial, TuningGrid, TuningOutcome};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Method(#[from] MethodError),
    #[error("invalid tuning grid: {0}")]
    Grid(String),
    #[error("{method}: every tuning trial failed: {}", diagnostics.join("; "))]
    AllTrialsFailed { method: MethodId, diagnostics: Vec<String> },
    #[error("reference run failed: {0}")]
    Reference(String),
    #[error("no reference optimum for instance `{0}`")]
    MissingReference(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMode {
    /// BLM with `α = 0.2` and exact sub-solves until the gap target.
    Bundle,
    /// Column enumeration; tiny instances only.
    BruteForce,
}

/// Best known `L*` for an instance with its certified gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptimum {
    pub instance: String,
    /// Maximization value. In bundle mode this is the best value found,
    /// so the true optimum lies in `[l_star, l_star + gap]`.
    pub l_star: f64,
    pub gap: f64,
    pub mode: ReferenceMode,
    /// False when the run stopped on its budget before the gap target.
    pub is_final: bool,
    pub pi_star: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptions {
    /// Absolute `UB − LB` target.
    pub gap_abs: f64,
    /// Relative target, against `max(|UB|, 1)`.
    pub gap_rel: f64,
    pub budget: Option<Duration>,
    pub max_iterations: Option<usize>,
    /// Defaults to `[0, C_VOLL]`.
    pub price_box: Option<PriceBox>,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self { gap_abs: 40.0, gap_rel: 1e-9, budget: None, max_iterations: None, price_box: None }
    }
}

pub const REFERENCE_ALPHA: f64 = 0.2;

pub fn compute_reference(inst: &Instance, mode: ReferenceMode, opts: &ReferenceOptions) -> Result<ReferenceOptimum, BenchError> {
    match mode {
        ReferenceMode::Bundle => reference_run(inst, opts).map(|(r, _)| r),
        ReferenceMode::BruteForce => {
            let q = opts.price_box.unwrap_or_else(|| PriceBox::for_instance(inst));
            let (l_star, pi_star) = brute_force_dual_opt_in(inst, &q)?;
            Ok(ReferenceOptimum { instance: inst.name.clone(), l_star, gap: 0.0, mode, is_final: true, pi_star })
        }
    }
}

/// Bundle-mode reference together with the BLM run that produced it.
pub fn reference_run(inst: &Instance, opts: &ReferenceOptions) -> Result<(ReferenceOptimum, RunResult), BenchError> {
    let q = opts.price_box.unwrap_or_else(|| PriceBox::for_instance(inst));
    let ws = warm_start(inst)?;
    let oracle = InstanceOracle::new(inst, OracleOptions::exact());
    let mut stop = StoppingCriterion::iterations(usize::MAX);
    stop.max_iterations = opts.max_iterations;
    stop.budget = opts.budget;
    stop.gap_target = Some(opts.gap_abs);
    stop.gap_target_rel = Some(opts.gap_rel);
    let config = MethodConfig::new(MethodId::Blm, REFERENCE_ALPHA, q, stop);
    let run = run_blm(&oracle, &config, &ws.prices)?;
    if let Termination::Failed(msg) = &run.termination {
        return Err(BenchError::Reference(msg.clone()));
    }
    let last = run.log.last().ok_or_else(|| BenchError::Reference("empty log".into()))?;
    let (ub, lb) = match last.extra {
        [Some(ub), Some(lb), _] => (ub, lb),
        _ => return Err(BenchError::Reference("log carries no bounds".into())),
    };
    let reference = ReferenceOptimum {
        instance: inst.name.clone(),
        l_star: -ub,
        gap: ub - lb,
        mode: ReferenceMode::Bundle,
        is_final: matches!(run.termination, Termination::GapReached | Termination::ZeroSubgradient),
        pi_star: run.best_point.clone(),
    };
    Ok((reference, run))
}

/// `(L* − L_best)/|L*|`, or `L* − L_best` flagged `absolute` when `L* = 0`.
/// The magnitude keeps the sign meaningful for a negative `L*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeError {
    pub value: f64,
    pub absolute: bool,
}

impl RelativeError {
    /// Reporting floor: small negatives from an inexact reference show as 0.
    pub fn clamped(self) -> f64 {
        self.value.max(0.0)
    }
}

pub fn relative_error(l_star: f64, l_best: f64) -> RelativeError {
    if l_star == 0.0 {
        RelativeError { value: l_star - l_best, absolute: true }
    } else {
        RelativeError { value: (l_star - l_best) / l_star.abs(), absolute: false }
    }
}

/// Relative error of a logged row's best-so-far value (`best` is `L̄`).
fn row_error(row: &LogRow, l_star: f64) -> f64 {
    relative_error(l_star, -row.best).value
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdTime {
    Reached(f64),
    Fail,
}

impl ThresholdTime {
    pub fn seconds(self) -> Option<f64> {
        match self {
            ThresholdTime::Reached(t) => Some(t),
            ThresholdTime::Fail => None,
        }
    }
}

/// First logged time at which the best-so-far relative error is at most
/// `threshold`.
pub fn time_to_threshold(log: &[LogRow], l_star: f64, threshold: f64) -> ThresholdTime {
    log.iter().find(|row| row_error(row, l_star) <= threshold).map_or(ThresholdTime::Fail, |row| ThresholdTime::Reached(row.t))
}

/// Geometric mean over the runs that reached the threshold; failures are
/// counted, not penalized.
pub fn geometric_mean(times: &[ThresholdTime]) -> GeometricMean {
    let reached: Vec<f64> = times.iter().filter_map(|t| t.seconds()).collect();
    let failures = times.len() - reached.len();
    let value = if reached.is_empty() {
        None
    } else if reached.iter().any(|&t| t <= 0.0) {
        Some(0.0)
    } else {
        Some((reached.iter().map(|t| t.ln()).sum::<f64>() / reached.len() as f64).exp())
    };
    GeometricMean { value, failures }
}

/// `(t, L* − L_best)` for each logged row.
pub fn gap_curve(log: &[LogRow], l_star: f64) -> Vec<(f64, f64)> {
    log.iter().map(|row| (row.t, l_star + row.best)).collect()
}

/// Resamples each curve onto `grid_points` uniform times over
/// `[0, latest end]` by last observation carried forward, then averages
/// pointwise. Grid times before a curve's first observation take that first
/// value.
pub fn aggregate_curves(curves: &[Vec<(f64, f64)>], grid_points: usize) -> Vec<(f64, f64)> {
    let curves: Vec<&Vec<(f64, f64)>> = curves.iter().filter(|c| !c.is_empty()).collect();
    if curves.is_empty() || grid_points == 0 {
        return Vec::new();
    }
    let end = curves.iter().map(|c| c.last().unwrap().0).fold(f64::NEG_INFINITY, f64::max);
    let times: Vec<f64> = if grid_points == 1 {
        vec![end]
    } else {
        (0..grid_points).map(|j| end * j as f64 / (grid_points - 1) as f64).collect()
    };
    times
        .into_iter()
        .map(|t| {
            let sum: f64 = curves
                .iter()
                .map(|c| {
                    let idx = c.partition_point(|&(ti, _)| ti <= t);
                    if idx == 0 {
                        c[0].1
                    } else {
                        c[idx - 1].1
                    }
                })
                .sum();
            (t, sum / curves.len() as f64)
        })
        .collect()
}

/// Where a run starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartPoint {
    /// Balance duals of the continuous relaxation.
    WarmStart,
    /// The same price in every period.
    Flat(f64),
}

/// Runs one configured method on an instance from the chosen start. FGM
/// smooths around the relaxation's primal solution.
pub fn run_on_instance(
    inst: &Instance,
    config: &MethodConfig,
    start: StartPoint,
    oracle_opts: OracleOptions,
) -> Result<RunResult, BenchError> {
    let ws = if start == StartPoint::WarmStart || config.method == MethodId::Fgm { Some(warm_start(inst)?) } else { None };
    let pi1 = match start {
        StartPoint::WarmStart => ws.as_ref().unwrap().prices.clone(),
        StartPoint::Flat(p) => vec![p; inst.horizon],
    };
    let mut oracle = InstanceOracle::new(inst, oracle_opts);
    if let Some(ws) = ws {
        oracle = oracle.with_reference(ws.reference);
    }
    Ok(run_method(&oracle, config, &pi1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tiny_corpus;

    fn row(k: usize, t: f64, best: f64) -> LogRow {
        LogRow { k, t, value: best, best, step: None, extra: [None; 3] }
    }

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_error(1000.0, 1000.0), RelativeError { value: 0.0, absolute: false });
        assert_eq!(relative_error(1000.0, 999.0).value, 1e-3);
        let e = relative_error(1000.0, 1000.5);
        assert!(e.value < 0.0 && e.clamped() == 0.0);
        assert_eq!(relative_error(0.0, -2.0), RelativeError { value: 2.0, absolute: true });
    }

    #[test]
    fn threshold_examples() {
        // L* = 1000; rows hold L̄_best = −L_best.
        let log = vec![row(1, 0.5, -990.0), row(2, 1.25, -999.5), row(3, 2.0, -1000.0)];
        assert_eq!(time_to_threshold(&log, 1000.0, 1e-3), ThresholdTime::Reached(1.25));
        assert_eq!(time_to_threshold(&log, 1000.0, 0.5), ThresholdTime::Reached(0.5));
        assert_eq!(time_to_threshold(&log[..2], 1000.0, 1e-6), ThresholdTime::Fail);
        // Looser thresholds never come later.
        let ts: Vec<f64> = [1e-6, 1e-4, 1e-3, 1e-2].iter().map(|&e| time_to_threshold(&log, 1000.0, e).seconds().unwrap()).collect();
        assert!(ts.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn geometric_mean_excludes_failures() {
        let g = geometric_mean(&[ThresholdTime::Reached(2.0), ThresholdTime::Fail, ThresholdTime::Reached(8.0)]);
        assert_eq!(g.failures, 1);
        assert!((g.value.unwrap() - 4.0).abs() < 1e-15);
        assert_eq!(geometric_mean(&[ThresholdTime::Fail]).value, None);
    }

    #[test]
    fn curves_examples() {
        let a = vec![(0.0, 4.0), (1.0, 2.0), (3.0, 1.0)];
        let b = vec![(0.5, 6.0), (2.0, 0.0)];
        assert_eq!(aggregate_curves(&[a.clone()], 4), vec![(0.0, 4.0), (1.0, 2.0), (2.0, 2.0), (3.0, 1.0)]);
        assert_eq!(aggregate_curves(&[a.clone(), a.clone()], 4), aggregate_curves(&[a.clone()], 4));
        // Grid 0, 1, 2, 3: b is 6 (backfilled), 6, 0, 0.
        let mean = aggregate_curves(&[a.clone(), b.clone()], 4);
        assert_eq!(mean, vec![(0.0, 5.0), (1.0, 4.0), (2.0, 1.0), (3.0, 0.5)]);
        assert_eq!(aggregate_curves(&[b, a], 4), mean);
    }

    #[test]
    fn zero_generator_reference_both_modes() {
        let inst = Instance { name: "z".into(), horizon: 2, voll: 3000.0, demand: vec![10.0, 4.0], generators: vec![] };
        for mode in [ReferenceMode::Bundle, ReferenceMode::BruteForce] {
            let r = compute_reference(&inst, mode, &ReferenceOptions::default()).unwrap();
            assert_eq!(r.l_star, 42000.0, "{mode:?}");
            assert_eq!(r.gap, 0.0);
            assert!(r.is_final);
        }
    }

    #[test]
    fn bundle_reference_brackets_brute_force() {
        let opts = ReferenceOptions { gap_abs: 0.0, ..Default::default() };
        for inst in tiny_corpus().iter().take(3) {
            let (r, run) = reference_run(inst, &opts).unwrap();
            let bf = compute_reference(inst, ReferenceMode::BruteForce, &opts).unwrap();
            let last = run.log.last().unwrap();
            assert_eq!(r.gap, last.extra[0].unwrap() - last.extra[1].unwrap());
            let slack = 1e-9 * bf.l_star.abs();
            assert!(r.l_star <= bf.l_star + slack && bf.l_star <= r.l_star + r.gap + slack, "{}: {r:?} vs {}", inst.name, bf.l_star);
        }
    }
}
