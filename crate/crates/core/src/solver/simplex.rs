//! Bounded-variable primal simplex on a compact (Tucker) tableau.
//!
//! Every row `i` gets an activity variable `r_i = a_i·x` bounded by the row's
//! range, so the whole system is homogeneous: `x_B = T·x_N`. The tableau only
//! stores `m × n` entries (rows × structural count), which keeps the many-cut
//! bundle LPs cheap. Phase one minimizes the sum of bound infeasibilities of
//! the basic variables; phase two the true cost. Entering and leaving choices
//! use the lowest variable index among eligible candidates (Bland).

use std::time::Instant;

use super::{LinearProgram, Sense, SolveOutcome, SolveStats, SolverError, Status};

/// Dense, row-scaled copy of a linear program's constraint system.
#[derive(Debug, Clone)]
pub(crate) struct DenseLp {
    pub n: usize,
    pub rows: Vec<Vec<f64>>,
    pub row_lo: Vec<f64>,
    pub row_hi: Vec<f64>,
    pub row_scale: Vec<f64>,
}

impl DenseLp {
    pub fn from_lp(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.rows.len();
        let mut rows = Vec::with_capacity(m);
        let mut row_lo = Vec::with_capacity(m);
        let mut row_hi = Vec::with_capacity(m);
        let mut row_scale = Vec::with_capacity(m);
        for row in &lp.rows {
            let mut dense = vec![0.0; n];
            for &(j, a) in &row.coefs {
                dense[j] += a;
            }
            let s = dense.iter().fold(0.0_f64, |acc, a| acc.max(a.abs()));
            let s = if s > 0.0 { s } else { 1.0 };
            dense.iter_mut().for_each(|a| *a /= s);
            let (lo, hi) = row.range();
            rows.push(dense);
            row_lo.push(lo / s);
            row_hi.push(hi / s);
            row_scale.push(s);
        }
        Self { n, rows, row_lo, row_hi, row_scale }
    }

    pub fn from_dense(n: usize, rows: Vec<(Vec<f64>, f64, f64)>) -> Self {
        let mut out = Self { n, rows: Vec::new(), row_lo: Vec::new(), row_hi: Vec::new(), row_scale: Vec::new() };
        for (mut a, lo, hi) in rows {
            let s = a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
            let s = if s > 0.0 { s } else { 1.0 };
            a.iter_mut().for_each(|v| *v /= s);
            out.rows.push(a);
            out.row_lo.push(lo / s);
            out.row_hi.push(hi / s);
            out.row_scale.push(s);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SimplexResult {
    pub status: Status,
    pub x: Vec<f64>,
    /// `∂z/∂b` per original (unscaled) row, for the minimization form.
    pub row_duals: Vec<f64>,
    pub iterations: usize,
}

/// Minimizes `cost·x` over `{lower ≤ x ≤ upper, row_lo ≤ A x ≤ row_hi}`.
pub(crate) fn run(lp: &DenseLp, cost: &[f64], lower: &[f64], upper: &[f64], feas_tol: f64) -> SimplexResult {
    let n = lp.n;
    let m = lp.rows.len();
    let infeasible = |iterations| SimplexResult { status: Status::Infeasible, x: Vec::new(), row_duals: Vec::new(), iterations };
    for j in 0..n {
        if lower[j] > upper[j] + feas_tol || lower[j] == f64::INFINITY || upper[j] == f64::NEG_INFINITY {
            return infeasible(0);
        }
    }
    for i in 0..m {
        if lp.row_lo[i] > lp.row_hi[i] + feas_tol {
            return infeasible(0);
        }
    }

    let bounds = |v: usize| -> (f64, f64) {
        if v < n {
            (lower[v], upper[v])
        } else {
            (lp.row_lo[v - n], lp.row_hi[v - n])
        }
    };
    let var_cost = |v: usize| if v < n { cost[v] } else { 0.0 };

    let mut tab = vec![0.0; m * n];
    for (i, row) in lp.rows.iter().enumerate() {
        tab[i * n..(i + 1) * n].copy_from_slice(row);
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut nonbasic: Vec<usize> = (0..n).collect();
    let mut nb_val: Vec<f64> = (0..n)
        .map(|j| {
            if lower[j].is_finite() {
                lower[j]
            } else if upper[j].is_finite() {
                upper[j]
            } else {
                0.0
            }
        })
        .collect();

    let cscale = cost.iter().fold(1.0_f64, |acc, c| acc.max(c.abs()));
    let piv_tol = 1e-11;
    let max_iter = 50 * (n + m) + 1000;
    let mut xb = vec![0.0; m];
    let mut cb = vec![0.0; m];
    let mut d = vec![0.0; n];
    let mut iterations = 0;

    loop {
        for i in 0..m {
            let row = &tab[i * n..(i + 1) * n];
            xb[i] = row.iter().zip(&nb_val).map(|(a, v)| a * v).sum();
        }
        let mut phase_one = false;
        for i in 0..m {
            let (lo, hi) = bounds(basis[i]);
            cb[i] = if xb[i] < lo - feas_tol {
                phase_one = true;
                -1.0
            } else if xb[i] > hi + feas_tol {
                phase_one = true;
                1.0
            } else {
                0.0
            };
        }
        if !phase_one {
            for i in 0..m {
                cb[i] = var_cost(basis[i]);
            }
        }
        for j in 0..n {
            d[j] = if phase_one { 0.0 } else { var_cost(nonbasic[j]) };
        }
        for i in 0..m {
            if cb[i] != 0.0 {
                let row = &tab[i * n..(i + 1) * n];
                for j in 0..n {
                    d[j] += cb[i] * row[j];
                }
            }
        }
        let dtol = if phase_one { 1e-10 } else { 1e-10 * cscale };

        // Entering variable: lowest index among improving candidates.
        let mut entering: Option<(usize, usize, f64)> = None;
        for j in 0..n {
            let v = nonbasic[j];
            let (lo, hi) = bounds(v);
            let dir = if d[j] < -dtol && nb_val[j] < hi {
                1.0
            } else if d[j] > dtol && nb_val[j] > lo {
                -1.0
            } else {
                continue;
            };
            if entering.map_or(true, |(bv, _, _)| v < bv) {
                entering = Some((v, j, dir));
            }
        }
        let Some((ev, q, dir)) = entering else {
            if phase_one {
                return infeasible(iterations);
            }
            break;
        };

        iterations += 1;
        if iterations > max_iter {
            return SimplexResult { status: Status::Limit, x: Vec::new(), row_duals: Vec::new(), iterations };
        }

        let (elo, ehi) = bounds(ev);
        let mut theta = if dir > 0.0 { ehi - nb_val[q] } else { nb_val[q] - elo };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let rate = dir * tab[i * n + q];
            if rate.abs() <= piv_tol {
                continue;
            }
            let (lo, hi) = bounds(basis[i]);
            let x = xb[i];
            let (lim, target) = if rate > 0.0 {
                if x < lo - feas_tol {
                    ((lo - x) / rate, lo)
                } else if x > hi + feas_tol || !hi.is_finite() {
                    continue;
                } else {
                    ((hi - x).max(0.0) / rate, hi)
                }
            } else if x > hi + feas_tol {
                ((hi - x) / rate, hi)
            } else if x < lo - feas_tol || !lo.is_finite() {
                continue;
            } else {
                ((lo - x).min(0.0) / rate, lo)
            };
            let better = match leave {
                None => lim < theta,
                Some((li, _)) => {
                    let tie = (lim - theta).abs() <= 1e-12 * (1.0 + theta.abs());
                    lim < theta && !tie || tie && basis[i] < basis[li]
                }
            };
            if better {
                theta = lim;
                leave = Some((i, target));
            }
        }

        if !theta.is_finite() {
            let status = if phase_one { Status::Limit } else { Status::Unbounded };
            return SimplexResult { status, x: Vec::new(), row_duals: Vec::new(), iterations };
        }

        nb_val[q] += dir * theta;
        if let Some((r, target)) = leave {
            pivot(&mut tab, m, n, r, q);
            let leaving = basis[r];
            basis[r] = ev;
            nonbasic[q] = leaving;
            nb_val[q] = target;
        } else {
            // bound flip
            nb_val[q] = if dir > 0.0 { ehi } else { elo };
        }
    }

    let mut x = vec![0.0; n];
    for j in 0..n {
        if nonbasic[j] < n {
            x[nonbasic[j]] = nb_val[j];
        }
    }
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = xb[i];
        }
    }
    let mut row_duals = vec![0.0; m];
    for j in 0..n {
        let v = nonbasic[j];
        if v >= n {
            row_duals[v - n] = d[j] / lp.row_scale[v - n];
        }
    }
    SimplexResult { status: Status::Optimal, x, row_duals, iterations }
}

fn pivot(tab: &mut [f64], m: usize, n: usize, r: usize, q: usize) {
    let p = tab[r * n + q];
    let (before, rest) = tab.split_at_mut(r * n);
    let (prow, after) = rest.split_at_mut(n);
    for s in 0..n {
        prow[s] = if s == q { 1.0 / p } else { -prow[s] / p };
    }
    let update = |row: &mut [f64]| {
        let f = row[q];
        if f != 0.0 {
            for s in 0..n {
                if s == q {
                    row[s] = f * prow[q];
                } else {
                    row[s] += f * prow[s];
                }
            }
        }
    };
    for i in 0..r {
        update(&mut before[i * n..(i + 1) * n]);
    }
    for i in 0..(m - r - 1) {
        update(&mut after[i * n..(i + 1) * n]);
    }
}

/// Solves a linear program with the built-in simplex.
///
/// `tol` is the primal feasibility tolerance applied to unit-max-norm rows.
pub fn solve_lp(p: &LinearProgram, tol: f64) -> Result<SolveOutcome, SolverError> {
    p.validate()?;
    let start = Instant::now();
    let dense = DenseLp::from_lp(p);
    let cost: Vec<f64> = match p.sense {
        Sense::Minimize => p.objective.clone(),
        Sense::Maximize => p.objective.iter().map(|c| -c).collect(),
    };
    let res = run(&dense, &cost, &p.lower, &p.upper, tol);
    let mut stats = SolveStats { iterations: res.iterations, ..Default::default() };
    stats.wall_time = start.elapsed();
    if res.status != Status::Optimal {
        return Ok(SolveOutcome::without_point(res.status, stats));
    }
    let x = res.x;
    let objective = p.evaluate(&x);
    stats.bound = objective;

    let scale = 1.0 + x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let violation = p.max_violation(&x);
    if violation > 1e-6 * scale {
        stats.message = Some(format!("primal violation {violation:e} after simplex"));
        return Ok(SolveOutcome { status: Status::Limit, x, objective, duals: None, stats });
    }
    let duals = if p.dual_rows.is_empty() {
        None
    } else {
        let sign = if p.sense == Sense::Maximize { -1.0 } else { 1.0 };
        Some(p.dual_rows.iter().map(|&r| sign * res.row_duals[r]).collect())
    };
    Ok(SolveOutcome { status: Status::Optimal, x, objective, duals, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::RowKind;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_bounded_variable() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        lp.add_var(0.0, 1.0, 1.0);
        let out = solve_lp(&lp, 1e-9).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_eq!(out.x, vec![0.0]);
        assert_eq!(out.objective, 0.0);
    }

    #[test]
    fn two_variable_dual_sign() {
        // Vertices of {x + y ≤ 1} ∩ [0,1]²: (0,0), (1,0), (0,1).
        // −x−y is −1 at the last two; raising the rhs by δ lowers the optimum by δ.
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var(0.0, 1.0, -1.0);
        let y = lp.add_var(0.0, 1.0, -1.0);
        let r = lp.add_row(vec![(x, 1.0), (y, 1.0)], RowKind::Le, 1.0);
        lp.request_duals([r]);
        let out = solve_lp(&lp, 1e-9).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_abs_diff_eq!(out.objective, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.duals.unwrap()[0], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn crossed_bounds_are_infeasible() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        lp.add_var(2.0, 1.0, 1.0);
        assert_eq!(solve_lp(&lp, 1e-9).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn infeasible_rows() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var(0.0, 1.0, 0.0);
        lp.add_row(vec![(x, 1.0)], RowKind::Ge, 2.0);
        assert_eq!(solve_lp(&lp, 1e-9).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let y = lp.add_var(0.0, f64::INFINITY, 0.0);
        lp.add_row(vec![(x, 1.0), (y, 1.0)], RowKind::Le, 3.0);
        assert_eq!(solve_lp(&lp, 1e-9).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn maximize_with_equality_and_free_variable() {
        // max 2a + b  s.t. a + b = 4, a − b ≤ 2, b free  →  a = 3, b = 1, value 7.
        let mut lp = LinearProgram::new(Sense::Maximize);
        let a = lp.add_var(0.0, 10.0, 2.0);
        let b = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let e = lp.add_row(vec![(a, 1.0), (b, 1.0)], RowKind::Eq, 4.0);
        let l = lp.add_row(vec![(a, 1.0), (b, -1.0)], RowKind::Le, 2.0);
        lp.request_duals([e, l]);
        let out = solve_lp(&lp, 1e-9).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_abs_diff_eq!(out.objective, 7.0, epsilon = 1e-10);
        assert_abs_diff_eq!(out.x[a], 3.0, epsilon = 1e-10);
        // z(b1, b2) = (3 b1 + b2) / 2 on this basis.
        let duals = out.duals.unwrap();
        assert_abs_diff_eq!(duals[0], 1.5, epsilon = 1e-10);
        assert_abs_diff_eq!(duals[1], 0.5, epsilon = 1e-10);
    }
}
