//! First-order methods for minimizing `L̄ = −L` over a price box.
//!
//! Every method talks to the objective through [`FirstOrderOracle`], records
//! one log row per oracle evaluation and finishes with [`finalize_run`],
//! which also tries the average of the last 10% of iterates.

mod adaptive;
mod bundle;
mod fgm;
mod log;
mod subgradient;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Instance;
use crate::oracle::{BruteForceOracle, DualOracle, OracleError, OracleOptions, PriceBox, ReferencePoint};

pub use adaptive::{run_da, run_dowg};
pub use bundle::{run_blm, run_bplm};
pub use fgm::run_fgm;
pub use log::{read_log_csv, write_log_csv, LogCsvError};
pub use subgradient::{run_subg, run_subg_ep, run_subg_l};

/// Default smoothing parameter for FGM.
pub const DEFAULT_SIGMA: f64 = 1e-8;

/// Value and subgradient of `L̄` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Objective access for the methods. `value` is `L̄(π)`, `grad` a
/// subgradient of `L̄`.
pub trait FirstOrderOracle {
    fn dim(&self) -> usize;

    fn evaluate(&self, pi: &[f64]) -> Result<Evaluation, OracleError>;

    /// Value and gradient of the smoothed `L̄_ς`.
    fn evaluate_smoothed(&self, _pi: &[f64], _sigma: f64) -> Result<Evaluation, OracleError> {
        Err(OracleError::Unsupported("this oracle has no smoothed variant".into()))
    }
}

/// The dual of an instance, with an optional smoothing reference point.
#[derive(Debug, Clone)]
pub struct InstanceOracle<'a> {
    pub dual: DualOracle<'a>,
    pub reference: Option<ReferencePoint>,
}

impl<'a> InstanceOracle<'a> {
    pub fn new(inst: &'a Instance, opts: OracleOptions) -> Self {
        Self { dual: DualOracle::new(inst, opts), reference: None }
    }

    pub fn with_reference(mut self, reference: ReferencePoint) -> Self {
        self.reference = Some(reference);
        self
    }
}

impl FirstOrderOracle for InstanceOracle<'_> {
    fn dim(&self) -> usize {
        self.dual.inst.horizon
    }

    fn evaluate(&self, pi: &[f64]) -> Result<Evaluation, OracleError> {
        let r = self.dual.eval(pi)?;
        Ok(Evaluation { value: r.value_lbar, grad: r.subgrad })
    }

    fn evaluate_smoothed(&self, pi: &[f64], sigma: f64) -> Result<Evaluation, OracleError> {
        let reference = self
            .reference
            .as_ref()
            .ok_or_else(|| OracleError::Unsupported("smoothing needs a reference point".into()))?;
        let r = self.dual.eval_smoothed(pi, sigma, reference)?;
        Ok(Evaluation { value: -r.value, grad: r.gradient })
    }
}

impl FirstOrderOracle for BruteForceOracle<'_> {
    fn dim(&self) -> usize {
        self.inst.horizon
    }

    fn evaluate(&self, pi: &[f64]) -> Result<Evaluation, OracleError> {
        let r = self.eval(pi)?;
        Ok(Evaluation { value: r.value_lbar, grad: r.subgrad })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodId {
    #[serde(rename = "SUBG")]
    Subg,
    #[serde(rename = "SUBG-EP")]
    SubgEp,
    #[serde(rename = "SUBG-L")]
    SubgL,
    #[serde(rename = "BLM")]
    Blm,
    #[serde(rename = "BPLM")]
    Bplm,
    #[serde(rename = "DA")]
    Da,
    #[serde(rename = "DOWG")]
    Dowg,
    #[serde(rename = "FGM")]
    Fgm,
}

impl MethodId {
    pub const ALL: [MethodId; 8] =
        [MethodId::Subg, MethodId::SubgEp, MethodId::SubgL, MethodId::Blm, MethodId::Bplm, MethodId::Da, MethodId::Dowg, MethodId::Fgm];

    pub fn name(self) -> &'static str {
        match self {
            MethodId::Subg => "SUBG",
            MethodId::SubgEp => "SUBG-EP",
            MethodId::SubgL => "SUBG-L",
            MethodId::Blm => "BLM",
            MethodId::Bplm => "BPLM",
            MethodId::Da => "DA",
            MethodId::Dowg => "DOWG",
            MethodId::Fgm => "FGM",
        }
    }

    /// Name of the tuned hyperparameter.
    pub fn param_name(self) -> &'static str {
        match self {
            MethodId::Subg => "eta",
            MethodId::SubgEp => "alpha",
            MethodId::SubgL => "R",
            MethodId::Blm | MethodId::Bplm => "alpha_level",
            MethodId::Da => "D1",
            MethodId::Dowg => "d1",
            MethodId::Fgm => "eta_fgm",
        }
    }

    pub fn validate_param(self, value: f64) -> Result<(), MethodError> {
        let ok = match self {
            MethodId::Blm | MethodId::Bplm => value > 0.0 && value < 1.0,
            _ => value > 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            let domain = if matches!(self, MethodId::Blm | MethodId::Bplm) { "(0, 1)" } else { "(0, ∞)" };
            Err(MethodError::Param { method: self.name(), param: self.param_name(), value, domain })
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = MethodError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.to_ascii_uppercase().replace('_', "-");
        MethodId::ALL.into_iter().find(|m| m.name() == up).ok_or_else(|| MethodError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum MethodError {
    #[error("unknown method `{0}` (expected one of SUBG, SUBG-EP, SUBG-L, BLM, BPLM, DA, DOWG, FGM)")]
    UnknownMethod(String),
    #[error("{method}: {param} = {value} outside {domain}")]
    Param { method: &'static str, param: &'static str, value: f64, domain: &'static str },
    #[error("starting point has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("stopping criterion sets no bound")]
    Unbounded,
    #[error("smoothing parameter must be positive, got {0}")]
    Sigma(f64),
}

/// How elapsed time is measured for logging and budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Clock {
    Wall,
    /// Each oracle evaluation advances time by a fixed amount, which makes
    /// logs and budgets reproducible.
    Virtual { seconds_per_iteration: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingCriterion {
    pub budget: Option<Duration>,
    /// Maximum number of logged oracle evaluations.
    pub max_iterations: Option<usize>,
    /// Bundle methods stop once `UB − LB` is at most this.
    pub gap_target: Option<f64>,
    /// Bundle methods stop once `UB − LB ≤ gap_target_rel·max(|UB|, 1)`.
    #[serde(default)]
    pub gap_target_rel: Option<f64>,
    /// Stop once the best `L̄` is at most this.
    pub target_value: Option<f64>,
    pub clock: Clock,
}

impl StoppingCriterion {
    pub fn iterations(n: usize) -> Self {
        Self { budget: None, max_iterations: Some(n), gap_target: None, gap_target_rel: None, target_value: None, clock: Clock::Wall }
    }

    pub fn budget(budget: Duration) -> Self {
        Self { budget: Some(budget), max_iterations: None, gap_target: None, gap_target_rel: None, target_value: None, clock: Clock::Wall }
    }

    pub fn validate(&self) -> Result<(), MethodError> {
        if self.budget.is_none()
            && self.max_iterations.is_none()
            && self.gap_target.is_none()
            && self.gap_target_rel.is_none()
            && self.target_value.is_none()
        {
            return Err(MethodError::Unbounded);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: MethodId,
    /// The method's hyperparameter (see [`MethodId::param_name`]).
    pub param: f64,
    pub sigma: f64,
    pub price_box: PriceBox,
    pub stop: StoppingCriterion,
    /// SUBG-EP: use the exact Polyak step with this `L̄*`.
    pub exact_polyak: Option<f64>,
    /// DA: step from `π¹` instead of `π^k`.
    pub da_anchor_first: bool,
    /// FGM: evaluate the unsmoothed `L̄` at every iterate.
    pub fgm_eval_every: bool,
    /// Bundle methods: drop cuts inactive for the last 50 solves (keeping at
    /// least `2T`).
    pub prune_bundle: bool,
    /// SUBG-L: number of steps `N`. Derived from the stopping criterion
    /// when unset.
    pub subg_l_steps: Option<usize>,
}

impl MethodConfig {
    pub fn new(method: MethodId, param: f64, price_box: PriceBox, stop: StoppingCriterion) -> Self {
        Self {
            method,
            param,
            sigma: DEFAULT_SIGMA,
            price_box,
            stop,
            exact_polyak: None,
            da_anchor_first: false,
            fgm_eval_every: true,
            prune_bundle: false,
            subg_l_steps: None,
        }
    }

    fn validate(&self, dim: usize, pi1: &[f64]) -> Result<(), MethodError> {
        self.method.validate_param(self.param)?;
        self.stop.validate()?;
        if pi1.len() != dim {
            return Err(MethodError::Dimension { expected: dim, got: pi1.len() });
        }
        if self.method == MethodId::Fgm && !(self.sigma > 0.0) {
            return Err(MethodError::Sigma(self.sigma));
        }
        Ok(())
    }
}

/// Componentwise clamp onto the box.
pub fn project_box(pi: &[f64], price_box: &PriceBox) -> Vec<f64> {
    price_box.project(pi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub k: usize,
    pub t: f64,
    pub value: f64,
    pub best: f64,
    /// Step length or coefficient used to leave this iterate.
    pub step: Option<f64>,
    /// Method-specific: UB, LB, level for bundle methods; `D_k` for DA;
    /// `d_k`, `v_k` for DoWG.
    pub extra: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    /// A zero subgradient certifies optimality.
    ZeroSubgradient,
    GapReached,
    TargetReached,
    IterationLimit,
    Budget,
    /// SUBG-L finished its `N` steps.
    StepsDone,
    /// A bundle step no longer moves the iterate at solver precision.
    Stalled,
    /// The oracle or an inner solve failed; the log is partial.
    Failed(String),
}

impl Termination {
    pub fn is_failure(&self) -> bool {
        matches!(self, Termination::Failed(_))
    }
}

/// Which candidate [`finalize_run`] returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Returned {
    Best,
    Last,
    Average,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub method: MethodId,
    pub log: Vec<LogRow>,
    /// `iterates[i]` is the point evaluated in `log[i]`.
    pub iterates: Vec<Vec<f64>>,
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub last_point: Vec<f64>,
    pub last_value: f64,
    pub average_point: Option<Vec<f64>>,
    pub average_value: Option<f64>,
    pub returned_point: Vec<f64>,
    pub returned_value: f64,
    pub returned: Returned,
    pub termination: Termination,
    pub oracle_calls: usize,
    pub wall_time: Duration,
}

impl RunResult {
    /// `L = −L̄` of the returned point.
    pub fn returned_l(&self) -> f64 {
        -self.returned_value
    }
}

/// Run state shared by all methods: the log, iterates and stopping checks.
pub(crate) struct Recorder<'o, O: ?Sized> {
    pub oracle: &'o O,
    pub config: &'o MethodConfig,
    start: Instant,
    pub log: Vec<LogRow>,
    pub iterates: Vec<Vec<f64>>,
    best: Option<(f64, usize)>,
    pub calls: usize,
}

impl<'o, O: FirstOrderOracle + ?Sized> Recorder<'o, O> {
    pub fn new(oracle: &'o O, config: &'o MethodConfig) -> Self {
        Self { oracle, config, start: Instant::now(), log: Vec::new(), iterates: Vec::new(), best: None, calls: 0 }
    }

    pub fn evaluate(&mut self, pi: &[f64]) -> Result<Evaluation, Termination> {
        self.calls += 1;
        self.oracle.evaluate(pi).map_err(|e| Termination::Failed(e.to_string()))
    }

    pub fn evaluate_smoothed(&mut self, pi: &[f64]) -> Result<Evaluation, Termination> {
        self.calls += 1;
        self.oracle.evaluate_smoothed(pi, self.config.sigma).map_err(|e| Termination::Failed(e.to_string()))
    }

    fn now(&self) -> f64 {
        match self.config.stop.clock {
            Clock::Wall => self.start.elapsed().as_secs_f64(),
            Clock::Virtual { seconds_per_iteration } => self.log.len() as f64 * seconds_per_iteration,
        }
    }

    pub fn best_value(&self) -> f64 {
        self.best.map_or(f64::INFINITY, |(v, _)| v)
    }

    /// Logs an evaluated iterate. Returns the reason to stop, if any.
    pub fn record(&mut self, pi: &[f64], value: f64) -> Option<Termination> {
        let k = self.log.len() + 1;
        if self.best.map_or(true, |(b, _)| value < b) {
            self.best = Some((value, k - 1));
        }
        self.iterates.push(pi.to_vec());
        self.log.push(LogRow { k, t: 0.0, value, best: self.best_value(), step: None, extra: [None; 3] });
        let t = self.now();
        self.log.last_mut().unwrap().t = t;
        self.limits()
    }

    /// Budget, iteration and target checks against the current log.
    pub fn limits(&self) -> Option<Termination> {
        let stop = &self.config.stop;
        if let Some(target) = stop.target_value {
            if self.best_value() <= target {
                return Some(Termination::TargetReached);
            }
        }
        if let Some(n) = stop.max_iterations {
            if self.log.len() >= n {
                return Some(Termination::IterationLimit);
            }
        }
        if let Some(budget) = stop.budget {
            if self.log.last().map_or(0.0, |r| r.t) >= budget.as_secs_f64() {
                return Some(Termination::Budget);
            }
        }
        None
    }

    pub fn set_step(&mut self, step: f64) {
        if let Some(r) = self.log.last_mut() {
            r.step = Some(step);
        }
    }

    pub fn set_extra(&mut self, extra: [Option<f64>; 3]) {
        if let Some(r) = self.log.last_mut() {
            r.extra = extra;
        }
    }

    pub fn finish(self, termination: Termination) -> RunResult {
        finalize_run(self.oracle, self.config, self.log, self.iterates, termination, self.calls, self.start)
    }
}

/// Picks the returned candidate.
///
/// The mean of the last `⌈0.1·K⌉` iterates is evaluated (one more oracle
/// call) and returned if it beats the best iterate, or the last iterate for
/// SUBG-L, whose answer is its last iterate.
pub fn finalize_run<O: FirstOrderOracle + ?Sized>(
    oracle: &O,
    config: &MethodConfig,
    log: Vec<LogRow>,
    iterates: Vec<Vec<f64>>,
    termination: Termination,
    calls: usize,
    start: Instant,
) -> RunResult {
    let mut calls = calls;
    let n = log.len();
    let (best_idx, best_value) = log.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, r)| if r.value < acc.1 { (i, r.value) } else { acc });
    let best_point = iterates.get(best_idx).cloned().unwrap_or_default();
    let last_point = iterates.last().cloned().unwrap_or_default();
    let last_value = log.last().map_or(f64::INFINITY, |r| r.value);
    let (anchor_point, anchor_value, anchor_kind) =
        if config.method == MethodId::SubgL { (last_point.clone(), last_value, Returned::Last) } else { (best_point.clone(), best_value, Returned::Best) };

    let mut average_point = None;
    let mut average_value = None;
    let (mut returned_point, mut returned_value, mut returned) = (anchor_point, anchor_value, anchor_kind);
    if n > 0 {
        let m = n.div_ceil(10);
        let dim = iterates[0].len();
        let mut avg = vec![0.0; dim];
        for x in &iterates[n - m..] {
            for (a, v) in avg.iter_mut().zip(x) {
                *a += v;
            }
        }
        for a in &mut avg {
            *a /= m as f64;
        }
        // Rounding can push the mean a hair outside the box.
        let avg = config.price_box.project(&avg);
        calls += 1;
        if let Ok(e) = oracle.evaluate(&avg) {
            if e.value < returned_value {
                returned_point = avg.clone();
                returned_value = e.value;
                returned = Returned::Average;
            }
            average_value = Some(e.value);
        }
        average_point = Some(avg);
    }
    RunResult {
        method: config.method,
        log,
        iterates,
        best_point,
        best_value,
        last_point,
        last_value,
        average_point,
        average_value,
        returned_point,
        returned_value,
        returned,
        termination,
        oracle_calls: calls,
        wall_time: start.elapsed(),
    }
}

/// Runs the configured method from `pi1` (projected onto the box first).
pub fn run_method<O: FirstOrderOracle + ?Sized>(oracle: &O, config: &MethodConfig, pi1: &[f64]) -> Result<RunResult, MethodError> {
    match config.method {
        MethodId::Subg => run_subg(oracle, config, pi1),
        MethodId::SubgEp => run_subg_ep(oracle, config, pi1),
        MethodId::SubgL => run_subg_l(oracle, config, pi1),
        MethodId::Blm => run_blm(oracle, config, pi1),
        MethodId::Bplm => run_bplm(oracle, config, pi1),
        MethodId::Da => run_da(oracle, config, pi1),
        MethodId::Dowg => run_dowg(oracle, config, pi1),
        MethodId::Fgm => run_fgm(oracle, config, pi1),
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `P_Q(x − c·g)`.
pub(crate) fn step(x: &[f64], c: f64, g: &[f64], price_box: &PriceBox) -> Vec<f64> {
    x.iter().zip(g).map(|(a, b)| (a - c * b).clamp(price_box.pi_min, price_box.pi_max)).collect()
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// `max_i (a_i·π + b_i)` as an `L̄`.
    pub struct MaxAffine {
        pub pieces: Vec<(Vec<f64>, f64)>,
    }

    impl FirstOrderOracle for MaxAffine {
        fn dim(&self) -> usize {
            self.pieces[0].0.len()
        }

        fn evaluate(&self, pi: &[f64]) -> Result<Evaluation, OracleError> {
            let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
            for (i, (a, b)) in self.pieces.iter().enumerate() {
                let v = dot(a, pi) + b;
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            Ok(Evaluation { value: best, grad: self.pieces[arg].0.clone() })
        }
    }

    /// `|π − 3|` on the line.
    pub fn abs_toy() -> MaxAffine {
        MaxAffine { pieces: vec![(vec![1.0], -3.0), (vec![-1.0], 3.0)] }
    }

    pub fn config(method: MethodId, param: f64, iters: usize) -> MethodConfig {
        MethodConfig::new(method, param, PriceBox::new(-10.0, 10.0), StoppingCriterion::iterations(iters))
    }
}
