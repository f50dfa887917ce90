//! The partial Lagrangian dual of unit commitment.
//!
//! With the balance rows dualized at prices `π`, the dual function splits
//! into a demand part `L0(π)` with a closed form and one mixed-binary
//! program `Lg(π)` per generator. Methods minimize `L̄ = −L`; every
//! subgradient in this module refers to `L̄` and equals `Σ_g p*_g − l*`.

mod brute;
mod formulation;
mod smooth;
mod warm;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GeneratorSchedule, Instance};
use crate::solver::{solve_mbp, LinearProgram, MixedBinaryProgram, Sense, SolverError, Status, DEFAULT_GAP_REL};
use formulation::Block;

pub use brute::{
    brute_force_dual_opt, brute_force_dual_opt_in, enumerate_columns, BruteForceOracle, Column, BRUTE_FORCE_MAX_GENERATORS, BRUTE_FORCE_MAX_HORIZON,
    BRUTE_FORCE_MAX_VERTICES,
};
pub use smooth::{eval_l0_smoothed, eval_lg_smoothed, eval_smoothed_oracle, SmoothedOracleResult};
pub use warm::{relaxed_dual_value, warm_start, ReferencePoint, WarmStart};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("price vector has length {got}, horizon is {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("generator {generator}: sub-solver returned {status}")]
    Subproblem { generator: String, status: Status },
    #[error("{what}: solver returned {status}")]
    Lp { what: String, status: Status },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("instance too large for brute force: {0}")]
    SizeGuard(String),
    #[error("smoothing parameter must be positive, got {0}")]
    Sigma(f64),
    #[error("{0}")]
    Unsupported(String),
}

/// Admissible prices `Q = [pi_min, pi_max]^T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBox {
    pub pi_min: f64,
    pub pi_max: f64,
}

impl PriceBox {
    pub fn new(pi_min: f64, pi_max: f64) -> Self {
        assert!(pi_min <= pi_max, "empty price box [{pi_min}, {pi_max}]");
        Self { pi_min, pi_max }
    }

    /// `[0, C_VOLL]`: prices above the lost-load cost never increase `L`.
    pub fn for_instance(inst: &Instance) -> Self {
        Self { pi_min: 0.0, pi_max: inst.voll }
    }

    pub fn project(&self, pi: &[f64]) -> Vec<f64> {
        pi.iter().map(|&x| x.clamp(self.pi_min, self.pi_max)).collect()
    }

    pub fn contains(&self, pi: &[f64]) -> bool {
        pi.iter().all(|&x| x >= self.pi_min && x <= self.pi_max)
    }
}

/// MIP gaps and threading for per-generator solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub gap_abs: f64,
    pub gap_rel: f64,
    /// Solve generators on the rayon pool. Results are summed in index order
    /// either way.
    pub parallel: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { gap_abs: 0.0, gap_rel: DEFAULT_GAP_REL, parallel: false }
    }
}

impl OracleOptions {
    pub fn exact() -> Self {
        Self { gap_abs: 0.0, gap_rel: 0.0, parallel: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleStats {
    pub wall_time: Duration,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value_l: f64,
    /// `−value_l`.
    pub value_lbar: f64,
    /// Subgradient of `L̄`: `Σ_g p*_g − l*`.
    pub subgrad: Vec<f64>,
    pub per_gen_values: Vec<f64>,
    pub l0_value: f64,
    pub l_star: Vec<f64>,
    pub schedules: Option<Vec<GeneratorSchedule>>,
    pub stats: OracleStats,
}

fn check_dim(inst: &Instance, pi: &[f64]) -> Result<(), OracleError> {
    if pi.len() != inst.horizon {
        return Err(OracleError::Dimension { expected: inst.horizon, got: pi.len() });
    }
    Ok(())
}

/// Closed-form demand part: `l*_t = L_t` when `π_t ≤ C_VOLL`, else 0.
pub fn eval_l0(inst: &Instance, pi: &[f64]) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut l_star = Vec::with_capacity(inst.horizon);
    for (t, &l) in inst.demand.iter().enumerate() {
        let served = if pi[t] <= inst.voll { l } else { 0.0 };
        value += inst.voll * (l - served) + pi[t] * served;
        l_star.push(served);
    }
    (value, l_star)
}

/// The per-generator program `min Σ_t C(p,u,v) − π_t p_t` over the feasible
/// set, built once and re-priced per call.
#[derive(Debug, Clone)]
pub(crate) struct GeneratorProgram {
    pub mbp: MixedBinaryProgram,
    pub block: Block,
}

impl GeneratorProgram {
    pub fn new(inst: &Instance, g: usize) -> Self {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let block = formulation::add_generator(&mut lp, &inst.generators[g], inst.horizon);
        let binaries = block.binaries().collect();
        Self { mbp: MixedBinaryProgram::new(lp, binaries), block }
    }

    fn priced(&self, inst: &Instance, g: usize, pi: &[f64]) -> MixedBinaryProgram {
        let mut mbp = self.mbp.clone();
        self.block.set_cost(&mut mbp.lp, &inst.generators[g], pi);
        mbp
    }

    pub fn solve(
        &self,
        inst: &Instance,
        g: usize,
        mbp: &MixedBinaryProgram,
        opts: &OracleOptions,
    ) -> Result<(f64, GeneratorSchedule, usize), OracleError> {
        let out = solve_mbp(mbp, opts.gap_abs, opts.gap_rel)?;
        if out.status != Status::Optimal {
            return Err(OracleError::Subproblem { generator: inst.generators[g].id.clone(), status: out.status });
        }
        let mut s = self.block.extract(&out.x);
        let p_max = inst.generators[g].p_max;
        for p in &mut s.p {
            *p = p.clamp(0.0, p_max);
        }
        Ok((out.objective, s, out.stats.nodes))
    }
}

/// `Lg(π)` and a minimizing schedule.
pub fn eval_lg(inst: &Instance, g: usize, pi: &[f64], opts: &OracleOptions) -> Result<(f64, GeneratorSchedule), OracleError> {
    check_dim(inst, pi)?;
    let prog = GeneratorProgram::new(inst, g);
    let (value, s, _) = prog.solve(inst, g, &prog.priced(inst, g, pi), opts)?;
    Ok((value, s))
}

/// `L(π)` with its subgradient. Builds the generator programs on every
/// call; use [`DualOracle`] for repeated evaluation.
pub fn eval_oracle(inst: &Instance, pi: &[f64], opts: &OracleOptions) -> Result<OracleResult, OracleError> {
    DualOracle::new(inst, *opts).eval(pi)
}

/// Repeated evaluation of `L` on one instance with cached generator programs.
#[derive(Debug, Clone)]
pub struct DualOracle<'a> {
    pub inst: &'a Instance,
    pub opts: OracleOptions,
    programs: Vec<GeneratorProgram>,
}

impl<'a> DualOracle<'a> {
    pub fn new(inst: &'a Instance, opts: OracleOptions) -> Self {
        let programs = (0..inst.generators.len()).map(|g| GeneratorProgram::new(inst, g)).collect();
        Self { inst, opts, programs }
    }

    pub fn eval(&self, pi: &[f64]) -> Result<OracleResult, OracleError> {
        check_dim(self.inst, pi)?;
        let start = Instant::now();
        let solve = |g: usize| {
            let prog = &self.programs[g];
            prog.solve(self.inst, g, &prog.priced(self.inst, g, pi), &self.opts)
        };
        let results: Vec<_> = if self.opts.parallel {
            (0..self.programs.len()).into_par_iter().map(solve).collect()
        } else {
            (0..self.programs.len()).map(solve).collect()
        };
        let (l0_value, l_star) = eval_l0(self.inst, pi);
        assemble(l0_value, l_star, results, start)
    }

    pub(crate) fn programs(&self) -> &[GeneratorProgram] {
        &self.programs
    }
}

fn assemble(
    l0_value: f64,
    l_star: Vec<f64>,
    results: Vec<Result<(f64, GeneratorSchedule, usize), OracleError>>,
    start: Instant,
) -> Result<OracleResult, OracleError> {
    let mut subgrad: Vec<f64> = l_star.iter().map(|l| -l).collect();
    let mut value_l = l0_value;
    let mut per_gen_values = Vec::with_capacity(results.len());
    let mut schedules = Vec::with_capacity(results.len());
    let mut nodes = 0;
    for r in results {
        let (v, s, n) = r?;
        value_l += v;
        for (gt, p) in subgrad.iter_mut().zip(&s.p) {
            *gt += p;
        }
        per_gen_values.push(v);
        schedules.push(s);
        nodes += n;
    }
    Ok(OracleResult {
        value_l,
        value_lbar: -value_l,
        subgrad,
        per_gen_values,
        l0_value,
        l_star,
        schedules: Some(schedules),
        stats: OracleStats { wall_time: start.elapsed(), nodes },
    })
}
