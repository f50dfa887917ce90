//! Exhaustive reference oracle for tiny instances.
//!
//! Every feasible commitment pattern is enumerated; for each, the vertices
//! of the dispatch polytope in `p` are found by solving every square subset
//! of its constraints. `Lg(π)` is then a minimum over finitely many columns,
//! and the dual optimum is the Dantzig–Wolfe master LP over all columns.
//! None of this goes through branch-and-bound.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::model::{Generator, GeneratorSchedule, Instance};
use crate::solver::{solve_lp, LinearProgram, RowKind, Sense, Status, FEAS_TOL};

use super::{check_dim, eval_l0, OracleError, OracleResult, OracleStats, PriceBox};

pub const BRUTE_FORCE_MAX_GENERATORS: usize = 3;
pub const BRUTE_FORCE_MAX_HORIZON: usize = 4;
pub const BRUTE_FORCE_MAX_VERTICES: usize = 100_000;

/// One vertex of one generator's feasible set.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub p: Vec<f64>,
    pub u: Vec<f64>,
    pub cost: f64,
}

/// Commitment patterns satisfying logic, minimum up/down and the initial
/// state. `v` and `w` follow from `u`.
fn commitment_patterns(g: &Generator, horizon: usize) -> Vec<Vec<f64>> {
    let forced = g.forced_periods(horizon);
    let u0 = g.init_u();
    let mut out = Vec::new();
    for mask in 0u32..(1 << horizon) {
        let u: Vec<f64> = (0..horizon).map(|t| f64::from((mask >> t) & 1)).collect();
        if u[..forced].iter().any(|&x| x != u0) {
            continue;
        }
        let s = GeneratorSchedule::from_commitment(vec![0.0; horizon], u.clone(), u0);
        let ok = (0..horizon).all(|t| {
            let ups: f64 = s.v[(t + 1).saturating_sub(g.min_up as usize)..=t].iter().sum();
            let downs: f64 = s.w[(t + 1).saturating_sub(g.min_down as usize)..=t].iter().sum();
            ups <= u[t] && downs <= 1.0 - u[t]
        });
        if ok {
            out.push(u);
        }
    }
    out
}

/// Rows `a·p ≤ b` of the dispatch polytope for a fixed commitment.
fn dispatch_rows(g: &Generator, s: &GeneratorSchedule) -> Vec<(Vec<f64>, f64)> {
    let horizon = s.u.len();
    let unit = |t: usize, c: f64| {
        let mut a = vec![0.0; horizon];
        a[t] = c;
        a
    };
    let mut rows = Vec::new();
    for t in 0..horizon {
        rows.push((unit(t, 1.0), g.p_max * s.u[t]));
        rows.push((unit(t, -1.0), -g.p_min * s.u[t]));
        let (u_prev, p_prev) = if t == 0 { (g.init_u(), Some(g.init_power)) } else { (s.u[t - 1], None) };
        let mut up = unit(t, 1.0);
        let mut down = unit(t, -1.0);
        let mut up_rhs = g.ramp_up * u_prev + g.startup_level * s.v[t];
        let mut down_rhs = g.ramp_down * s.u[t] + g.shutdown_level * s.w[t];
        match p_prev {
            Some(p0) => {
                up_rhs += p0;
                down_rhs -= p0;
            }
            None => {
                up[t - 1] = -1.0;
                down[t - 1] = 1.0;
            }
        }
        rows.push((up, up_rhs));
        rows.push((down, down_rhs));
    }
    rows
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn vertices(rows: &[(Vec<f64>, f64)], dim: usize, limit: usize) -> Result<Vec<Vec<f64>>, OracleError> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..dim).collect();
    loop {
        let a = DMatrix::from_fn(dim, dim, |i, j| rows[idx[i]].0[j]);
        let b = DVector::from_iterator(dim, idx.iter().map(|&i| rows[i].1));
        let sv = a.clone().singular_values();
        if sv.min() > 1e-9 * sv.max().max(1.0) {
            if let Some(x) = a.lu().solve(&b) {
                let feasible = rows.iter().all(|(r, rhs)| {
                    let act: f64 = r.iter().zip(x.iter()).map(|(c, v)| c * v).sum();
                    act <= rhs + 1e-9 * (1.0 + rhs.abs())
                });
                let fresh = || {
                    !out.iter().any(|y| y.iter().zip(x.iter()).all(|(p, q)| (p - q).abs() <= 1e-9 * (1.0 + p.abs())))
                };
                if feasible && fresh() {
                    out.push(x.iter().copied().collect());
                    if out.len() > limit {
                        return Err(OracleError::SizeGuard(format!("more than {limit} vertices")));
                    }
                }
            }
        }
        if !next_combination(&mut idx, rows.len()) {
            return Ok(out);
        }
    }
}

/// All vertex columns of generator `g`'s feasible set.
pub fn enumerate_columns(inst: &Instance, g: usize) -> Result<Vec<Column>, OracleError> {
    let gen = &inst.generators[g];
    let horizon = inst.horizon;
    if horizon > BRUTE_FORCE_MAX_HORIZON {
        return Err(OracleError::SizeGuard(format!("horizon {horizon} > {BRUTE_FORCE_MAX_HORIZON}")));
    }
    let mut columns = Vec::new();
    for u in commitment_patterns(gen, horizon) {
        let s = GeneratorSchedule::from_commitment(vec![0.0; horizon], u.clone(), gen.init_u());
        let rows = dispatch_rows(gen, &s);
        for p in vertices(&rows, horizon, BRUTE_FORCE_MAX_VERTICES)? {
            let cost = (0..horizon).map(|t| gen.period_cost(p[t], s.u[t], s.v[t])).sum();
            columns.push(Column { p, u: u.clone(), cost });
            if columns.len() > BRUTE_FORCE_MAX_VERTICES {
                return Err(OracleError::SizeGuard(format!("more than {BRUTE_FORCE_MAX_VERTICES} vertices")));
            }
        }
    }
    Ok(columns)
}

fn guard(inst: &Instance) -> Result<(), OracleError> {
    if inst.generators.len() > BRUTE_FORCE_MAX_GENERATORS {
        return Err(OracleError::SizeGuard(format!("{} generators > {BRUTE_FORCE_MAX_GENERATORS}", inst.generators.len())));
    }
    if inst.horizon > BRUTE_FORCE_MAX_HORIZON {
        return Err(OracleError::SizeGuard(format!("horizon {} > {BRUTE_FORCE_MAX_HORIZON}", inst.horizon)));
    }
    Ok(())
}

/// `L(π)` as a minimum over enumerated columns.
#[derive(Debug, Clone)]
pub struct BruteForceOracle<'a> {
    pub inst: &'a Instance,
    pub columns: Vec<Vec<Column>>,
}

impl<'a> BruteForceOracle<'a> {
    pub fn new(inst: &'a Instance) -> Result<Self, OracleError> {
        guard(inst)?;
        let columns = (0..inst.generators.len()).map(|g| enumerate_columns(inst, g)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { inst, columns })
    }

    pub fn eval(&self, pi: &[f64]) -> Result<OracleResult, OracleError> {
        check_dim(self.inst, pi)?;
        let start = Instant::now();
        let (l0_value, l_star) = eval_l0(self.inst, pi);
        let mut value_l = l0_value;
        let mut subgrad: Vec<f64> = l_star.iter().map(|l| -l).collect();
        let mut per_gen_values = Vec::new();
        let mut schedules = Vec::new();
        for (g, cols) in self.columns.iter().enumerate() {
            let mut best: Option<(f64, &Column)> = None;
            for c in cols {
                let v = c.cost - c.p.iter().zip(pi).map(|(p, x)| p * x).sum::<f64>();
                if best.map_or(true, |(b, _)| v < b) {
                    best = Some((v, c));
                }
            }
            let (v, c) = best.ok_or_else(|| OracleError::Subproblem {
                generator: self.inst.generators[g].id.clone(),
                status: Status::Infeasible,
            })?;
            value_l += v;
            for (gt, p) in subgrad.iter_mut().zip(&c.p) {
                *gt += p;
            }
            per_gen_values.push(v);
            schedules.push(GeneratorSchedule::from_commitment(c.p.clone(), c.u.clone(), self.inst.generators[g].init_u()));
        }
        Ok(OracleResult {
            value_l,
            value_lbar: -value_l,
            subgrad,
            per_gen_values,
            l0_value,
            l_star,
            schedules: Some(schedules),
            stats: OracleStats { wall_time: start.elapsed(), nodes: 0 },
        })
    }

    /// Solves the master LP over all columns: returns `(L*, π*)` with `π`
    /// unrestricted.
    pub fn dual_optimum(&self) -> Result<(f64, Vec<f64>), OracleError> {
        self.dual_optimum_in(None)
    }

    /// As [`Self::dual_optimum`], maximizing over `π ∈ Q` when a box is
    /// given. Each finite box side becomes a slack column on the balance
    /// rows: disposal at cost `−π_min` bounds `π` below, purchase at
    /// `π_max` bounds it above.
    pub fn dual_optimum_in(&self, price_box: Option<&PriceBox>) -> Result<(f64, Vec<f64>), OracleError> {
        let inst = self.inst;
        let mut lp = LinearProgram::new(Sense::Minimize);
        let weights: Vec<Vec<usize>> =
            self.columns.iter().map(|cols| cols.iter().map(|c| lp.add_var(0.0, 1.0, c.cost)).collect()).collect();
        let served: Vec<usize> = inst.demand.iter().map(|&l| lp.add_var(0.0, l, -inst.voll)).collect();
        lp.offset = inst.demand.iter().map(|l| inst.voll * l).sum();
        for w in &weights {
            lp.add_row(w.iter().map(|&j| (j, 1.0)).collect(), RowKind::Eq, 1.0);
        }
        let balance: Vec<usize> = (0..inst.horizon)
            .map(|t| {
                let mut row: Vec<(usize, f64)> = Vec::new();
                for (cols, w) in self.columns.iter().zip(&weights) {
                    for (c, &j) in cols.iter().zip(w) {
                        if c.p[t] != 0.0 {
                            row.push((j, c.p[t]));
                        }
                    }
                }
                row.push((served[t], -1.0));
                if let Some(b) = price_box {
                    if b.pi_min.is_finite() {
                        row.push((lp.add_var(0.0, f64::INFINITY, -b.pi_min), -1.0));
                    }
                    if b.pi_max.is_finite() {
                        row.push((lp.add_var(0.0, f64::INFINITY, b.pi_max), 1.0));
                    }
                }
                lp.add_row(row, RowKind::Eq, 0.0)
            })
            .collect();
        lp.request_duals(balance);
        let out = solve_lp(&lp, FEAS_TOL)?;
        if out.status != Status::Optimal {
            return Err(OracleError::Lp { what: "column master".into(), status: out.status });
        }
        Ok((out.objective, out.duals.unwrap_or_default()))
    }
}

/// `max_π L(π)` and an optimal price vector, by full column enumeration.
pub fn brute_force_dual_opt(inst: &Instance) -> Result<(f64, Vec<f64>), OracleError> {
    BruteForceOracle::new(inst)?.dual_optimum()
}

/// `max_{π∈Q} L(π)` by full column enumeration.
pub fn brute_force_dual_opt_in(inst: &Instance, price_box: &PriceBox) -> Result<(f64, Vec<f64>), OracleError> {
    BruteForceOracle::new(inst)?.dual_optimum_in(Some(price_box))
}
