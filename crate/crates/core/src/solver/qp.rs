//! Primal active-set method for convex quadratic programs with a diagonal,
//! positive semidefinite Hessian:
//!
//! ```text
//! min ½ Σ_j h_j x_j² + c·x   s.t.  lower ≤ x ≤ upper,  row_lo ≤ A x ≤ row_hi
//! ```
//!
//! The working set holds active bounds and active rows. Each iteration works
//! in the null space of the active rows restricted to the non-fixed
//! variables: directions of positive curvature take a (capped) Newton step,
//! zero-curvature directions with a descent component move linearly until a
//! constraint blocks, exactly like a simplex edge. When the point is
//! stationary on its working set, the constraint with the most wrongly-signed
//! multiplier is released.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::simplex::{self, DenseLp};
use super::{ProjectionProblem, SolveOutcome, SolveStats, SolverError, Status};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
    Fixed,
}

pub(crate) struct QpData<'a> {
    pub diag: &'a [f64],
    pub c: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub rows: &'a DenseLp,
}

#[derive(Debug, Clone)]
pub(crate) struct QpResult {
    pub status: Status,
    pub x: Vec<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

impl QpData<'_> {
    fn n(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(j, &v)| 0.5 * self.diag[j] * v * v + self.c[j] * v)
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(j, &v)| self.diag[j] * v + self.c[j]).collect()
    }

    fn activity(&self, i: usize, x: &[f64]) -> f64 {
        self.rows.rows[i].iter().zip(x).map(|(a, v)| a * v).sum()
    }
}

/// Finds a feasible starting point; minimizes `start_cost` when it is bounded.
pub(crate) fn feasible_start(data: &QpData<'_>, start_cost: &[f64], tol: f64) -> Result<Vec<f64>, Status> {
    let res = simplex::run(data.rows, start_cost, data.lower, data.upper, tol);
    match res.status {
        Status::Optimal => Ok(res.x),
        Status::Unbounded => {
            let zero = vec![0.0; data.n()];
            let res = simplex::run(data.rows, &zero, data.lower, data.upper, tol);
            if res.status == Status::Optimal {
                Ok(res.x)
            } else {
                Err(res.status)
            }
        }
        other => Err(other),
    }
}

fn null_basis(a_r: &DMatrix<f64>, nf: usize) -> DMatrix<f64> {
    let r = a_r.nrows();
    if r == 0 {
        return DMatrix::identity(nf, nf);
    }
    if r >= nf {
        return DMatrix::zeros(nf, 0);
    }
    let mut m = DMatrix::zeros(nf, nf);
    m.view_mut((0, 0), (nf, r)).copy_from(&a_r.transpose());
    let q = m.qr().q();
    q.columns(r, nf - r).into_owned()
}

struct WorkingSet {
    bound: Vec<Option<Side>>,
    rows: Vec<(usize, Side)>,
}

impl WorkingSet {
    fn free(&self) -> Vec<usize> {
        (0..self.bound.len()).filter(|&j| self.bound[j].is_none()).collect()
    }

    fn has_row(&self, i: usize) -> bool {
        self.rows.iter().any(|&(k, _)| k == i)
    }

    fn restricted_rows(&self, data: &QpData<'_>, free: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), free.len(), |r, c| data.rows.rows[self.rows[r].0][free[c]])
    }
}

/// Runs the active-set iteration from a feasible `x0`.
pub(crate) fn run(data: &QpData<'_>, mut x: Vec<f64>, tol: f64) -> QpResult {
    let n = data.n();
    let m = data.rows.rows.len();
    let max_diag = data.diag.iter().fold(0.0_f64, |a, &h| a.max(h));
    let curv_tol = 1e-10 * max_diag;

    let mut ws = WorkingSet { bound: vec![None; n], rows: Vec::new() };
    for j in 0..n {
        let (lo, hi) = (data.lower[j], data.upper[j]);
        if lo == hi {
            x[j] = lo;
            ws.bound[j] = Some(Side::Fixed);
        } else if (x[j] - lo).abs() <= tol * (1.0 + lo.abs()) {
            x[j] = lo;
            ws.bound[j] = Some(Side::Lower);
        } else if (x[j] - hi).abs() <= tol * (1.0 + hi.abs()) {
            x[j] = hi;
            ws.bound[j] = Some(Side::Upper);
        }
    }
    for i in 0..m {
        let (lo, hi) = (data.rows.row_lo[i], data.rows.row_hi[i]);
        let act = data.activity(i, &x);
        let side = if lo == hi {
            Side::Fixed
        } else if (act - lo).abs() <= tol * (1.0 + lo.abs()) {
            Side::Lower
        } else if (act - hi).abs() <= tol * (1.0 + hi.abs()) {
            Side::Upper
        } else {
            continue;
        };
        let free = ws.free();
        let a_f = DVector::from_iterator(free.len(), free.iter().map(|&j| data.rows.rows[i][j]));
        let norm = a_f.norm();
        if norm <= 1e-12 {
            continue;
        }
        let z = null_basis(&ws.restricted_rows(data, &free), free.len());
        if (z.transpose() * &a_f).norm() > 1e-9 * norm {
            ws.rows.push((i, side));
        }
    }

    let max_iter = 20 * (n + m) + 200;
    let mut iterations = 0;
    // After a zero-length step, releases follow a smallest-index rule so
    // degenerate vertices cannot cycle.
    let mut degenerate = false;
    // A full unblocked Newton step lands on the working-set minimizer; with
    // tiny curvature, recomputing it would only chase rounding noise.
    let mut at_minimizer = false;
    loop {
        iterations += 1;
        if iterations > max_iter {
            let kkt = f64::INFINITY;
            return QpResult { status: Status::Limit, x, iterations, kkt_residual: kkt };
        }
        let g = data.gradient(&x);
        let gscale = 1.0 + g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let free = ws.free();
        let nf = free.len();
        let a_r = ws.restricted_rows(data, &free);
        let z = null_basis(&a_r, nf);
        let dim = z.ncols();

        let mut step: Option<(Vec<f64>, f64)> = None;
        if dim > 0 && !at_minimizer {
            let g_f = DVector::from_iterator(nf, free.iter().map(|&j| g[j]));
            let h_f = DVector::from_iterator(nf, free.iter().map(|&j| data.diag[j]));
            let zt = z.transpose();
            let hz = &zt * DMatrix::from_diagonal(&h_f) * &z;
            let zg = &zt * &g_f;
            let eig = SymmetricEigen::new(hz);
            let y = eig.eigenvectors.transpose() * &zg;
            let mut lin = DVector::zeros(dim);
            let mut newton = DVector::zeros(dim);
            for k in 0..dim {
                if eig.eigenvalues[k] <= curv_tol {
                    lin[k] = -y[k];
                } else {
                    newton[k] = -y[k] / eig.eigenvalues[k];
                }
            }
            let (coords, cap) = if lin.norm() > 1e-11 * gscale {
                (lin, f64::INFINITY)
            } else {
                (newton, 1.0)
            };
            let d_f = &z * (&eig.eigenvectors * coords);
            let xscale = 1.0 + x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if cap.is_infinite() || d_f.amax() > 1e-13 * xscale {
                let mut d = vec![0.0; n];
                for (c, &j) in free.iter().enumerate() {
                    d[j] = d_f[c];
                }
                step = Some((d, cap));
            }
        }

        if let Some((d, cap)) = step {
            let dnorm = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let mut alpha = cap;
            let mut block: Option<Block> = None;
            for &j in &free {
                let dj = d[j];
                // Components this small are rounding noise from nearly
                // dependent working sets; letting them block stalls the
                // iteration at degenerate vertices.
                if dj.abs() <= 1e-10 * dnorm {
                    continue;
                }
                let (lim, side) = if dj > 0.0 {
                    if !data.upper[j].is_finite() {
                        continue;
                    }
                    ((data.upper[j] - x[j]).max(0.0) / dj, Side::Upper)
                } else {
                    if !data.lower[j].is_finite() {
                        continue;
                    }
                    ((data.lower[j] - x[j]).min(0.0) / dj, Side::Lower)
                };
                if lim < alpha {
                    alpha = lim;
                    block = Some(Block::Bound(j, side));
                }
            }
            for i in 0..m {
                if ws.has_row(i) {
                    continue;
                }
                let ad: f64 = data.rows.rows[i].iter().zip(&d).map(|(a, v)| a * v).sum();
                if ad.abs() <= 1e-10 * dnorm * (1.0 + data.rows.rows[i].iter().fold(0.0_f64, |a, v| a.max(v.abs()))) {
                    continue;
                }
                let act = data.activity(i, &x);
                let (lo, hi) = (data.rows.row_lo[i], data.rows.row_hi[i]);
                let (lim, side) = if ad > 0.0 {
                    if !hi.is_finite() {
                        continue;
                    }
                    ((hi - act).max(0.0) / ad, if lo == hi { Side::Fixed } else { Side::Upper })
                } else {
                    if !lo.is_finite() {
                        continue;
                    }
                    ((lo - act).min(0.0) / ad, if lo == hi { Side::Fixed } else { Side::Lower })
                };
                if lim < alpha {
                    alpha = lim;
                    block = Some(Block::Row(i, side));
                }
            }
            if !alpha.is_finite() {
                return QpResult { status: Status::Unbounded, x, iterations, kkt_residual: f64::INFINITY };
            }
            degenerate = alpha * dnorm <= 1e-14 * (1.0 + x.iter().fold(0.0_f64, |a, v| a.max(v.abs())));
            for j in 0..n {
                x[j] = (x[j] + alpha * d[j]).clamp(data.lower[j], data.upper[j]);
            }
            at_minimizer = block.is_none() && cap == 1.0;
            match block {
                Some(Block::Bound(j, side)) => {
                    x[j] = if side == Side::Upper { data.upper[j] } else { data.lower[j] };
                    ws.bound[j] = Some(side);
                }
                Some(Block::Row(i, side)) => ws.rows.push((i, side)),
                None => {}
            }
            continue;
        }

        // Stationary on the working set: check multiplier signs.
        let mult = multipliers(data, &ws, &free, &a_r, &g);
        let mtol = 1e-10 * gscale;
        let mut worst: Option<(f64, Release)> = None;
        let mut first_row: Option<(usize, usize)> = None;
        for (k, &(i, side)) in ws.rows.iter().enumerate() {
            let v = violation(side, mult.rows[k]);
            if v > mtol && worst.map_or(true, |(w, _)| v > w) {
                worst = Some((v, Release::Row(k)));
            }
            if v > mtol && first_row.map_or(true, |(fi, _)| i < fi) {
                first_row = Some((i, k));
            }
        }
        let mut first_bound = None;
        for j in 0..n {
            if let Some(side) = ws.bound[j] {
                let v = violation(side, mult.bounds[j]);
                if v > mtol && worst.map_or(true, |(w, _)| v > w) {
                    worst = Some((v, Release::Bound(j)));
                }
                if v > mtol && first_bound.is_none() {
                    first_bound = Some(j);
                }
            }
        }
        if degenerate && worst.is_some() {
            worst = match (first_bound, first_row) {
                (Some(j), _) => Some((0.0, Release::Bound(j))),
                (None, Some((_, k))) => Some((0.0, Release::Row(k))),
                (None, None) => worst,
            };
        }
        at_minimizer = false;
        match worst {
            Some((_, Release::Row(k))) => {
                ws.rows.remove(k);
            }
            Some((_, Release::Bound(j))) => ws.bound[j] = None,
            None => {
                let kkt = kkt_residual(data, &x, &ws, &mult, gscale);
                return QpResult { status: Status::Optimal, x, iterations, kkt_residual: kkt };
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Block {
    Bound(usize, Side),
    Row(usize, Side),
}

#[derive(Clone, Copy)]
enum Release {
    Bound(usize),
    Row(usize),
}

struct Multipliers {
    rows: Vec<f64>,
    bounds: Vec<f64>,
    stationarity: f64,
}

fn violation(side: Side, mu: f64) -> f64 {
    match side {
        Side::Lower => (-mu).max(0.0),
        Side::Upper => mu.max(0.0),
        Side::Fixed => 0.0,
    }
}

/// Least-squares multipliers with `g = A_Wᵀ μ + Σ_bounds λ_j e_j`.
fn multipliers(data: &QpData<'_>, ws: &WorkingSet, free: &[usize], a_r: &DMatrix<f64>, g: &[f64]) -> Multipliers {
    let n = g.len();
    let r = ws.rows.len();
    let mut mu = vec![0.0; r];
    let stationarity;
    if r > 0 {
        let g_f = DVector::from_iterator(free.len(), free.iter().map(|&j| g[j]));
        let gram = a_r * a_r.transpose();
        let rhs = a_r * &g_f;
        if let Some(sol) = gram.lu().solve(&rhs) {
            mu = sol.iter().copied().collect();
        }
        let resid = g_f - a_r.transpose() * DVector::from_vec(mu.clone());
        stationarity = resid.amax();
    } else {
        stationarity = free.iter().fold(0.0_f64, |a, &j| a.max(g[j].abs()));
    }
    let mut bounds = vec![0.0; n];
    for j in 0..n {
        if ws.bound[j].is_some() {
            let mut v = g[j];
            for (k, &(i, _)) in ws.rows.iter().enumerate() {
                v -= mu[k] * data.rows.rows[i][j];
            }
            bounds[j] = v;
        }
    }
    Multipliers { rows: mu, bounds, stationarity }
}

fn kkt_residual(data: &QpData<'_>, x: &[f64], ws: &WorkingSet, mult: &Multipliers, gscale: f64) -> f64 {
    let mut primal = 0.0_f64;
    for j in 0..x.len() {
        primal = primal.max(data.lower[j] - x[j]).max(x[j] - data.upper[j]);
    }
    for i in 0..data.rows.rows.len() {
        let act = data.activity(i, x);
        primal = primal.max(data.rows.row_lo[i] - act).max(act - data.rows.row_hi[i]);
    }
    let mut sign = 0.0_f64;
    for (k, &(_, side)) in ws.rows.iter().enumerate() {
        sign = sign.max(violation(side, mult.rows[k]));
    }
    for j in 0..x.len() {
        if let Some(side) = ws.bound[j] {
            sign = sign.max(violation(side, mult.bounds[j]));
        }
    }
    primal.max((mult.stationarity + sign) / gscale)
}

/// Projects `anchor` onto `{lower ≤ x ≤ upper, a_i·x ≤ b_i}`.
///
/// The reported objective is the squared distance `‖x − anchor‖²`.
pub fn solve_projection(p: &ProjectionProblem, tol: f64) -> Result<SolveOutcome, SolverError> {
    let n = p.anchor.len();
    if p.lower.len() != n || p.upper.len() != n {
        return Err(SolverError::Dimension(format!(
            "anchor has {n} entries but box has {}/{}",
            p.lower.len(),
            p.upper.len()
        )));
    }
    if let Some((i, _)) = p.cuts.iter().enumerate().find(|(_, (a, _))| a.len() != n) {
        return Err(SolverError::Dimension(format!("cut {i} has wrong dimension")));
    }
    if (0..n).any(|j| p.lower[j] > p.upper[j]) {
        return Err(SolverError::Malformed("empty box".into()));
    }
    let start = Instant::now();
    let clamp: Vec<f64> = (0..n).map(|j| p.anchor[j].clamp(p.lower[j], p.upper[j])).collect();
    let rows = DenseLp::from_dense(
        n,
        p.cuts.iter().map(|(a, b)| (a.clone(), f64::NEG_INFINITY, *b)).collect(),
    );
    let diag = vec![1.0; n];
    let c: Vec<f64> = p.anchor.iter().map(|a| -a).collect();
    let data = QpData { diag: &diag, c: &c, lower: &p.lower, upper: &p.upper, rows: &rows };

    let clamp_ok = (0..rows.rows.len()).all(|i| data.activity(i, &clamp) <= rows.row_hi[i] + tol);
    let x0 = if clamp_ok {
        clamp
    } else {
        match feasible_start(&data, &vec![0.0; n], tol) {
            Ok(x) => x,
            Err(status) => {
                let stats = SolveStats { wall_time: start.elapsed(), ..Default::default() };
                return Ok(SolveOutcome::without_point(status, stats));
            }
        }
    };
    let res = run(&data, x0, tol);
    let objective = if res.x.is_empty() {
        f64::NAN
    } else {
        res.x.iter().zip(&p.anchor).map(|(x, a)| (x - a) * (x - a)).sum()
    };
    let stats = SolveStats {
        iterations: res.iterations,
        wall_time: start.elapsed(),
        bound: objective,
        kkt_residual: res.kkt_residual,
        ..Default::default()
    };
    Ok(SolveOutcome { status: res.status, x: res.x, objective, duals: None, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_box(anchor: Vec<f64>) -> ProjectionProblem {
        let n = anchor.len();
        ProjectionProblem::new(anchor, vec![0.0; n], vec![1.0; n])
    }

    #[test]
    fn interior_anchor_is_returned() {
        let out = solve_projection(&unit_box(vec![0.3, 0.6]), 1e-9).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_eq!(out.x, vec![0.3, 0.6]);
    }

    #[test]
    fn outside_anchor_is_clamped() {
        let out = solve_projection(&unit_box(vec![2.0, 2.0]), 1e-9).unwrap();
        assert_eq!(out.x, vec![1.0, 1.0]);
        assert_abs_diff_eq!(out.objective, 2.0);
    }

    #[test]
    fn single_cut_kkt() {
        // Stationarity (x − 1) + μ = 0 in both coordinates with x + y = 1 gives (½, ½).
        let mut p = unit_box(vec![1.0, 1.0]);
        p.add_cut(vec![1.0, 1.0], 1.0);
        let out = solve_projection(&p, 1e-9).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_abs_diff_eq!(out.x[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.x[1], 0.5, epsilon = 1e-12);
        assert!(out.stats.kkt_residual <= 1e-9);
    }

    #[test]
    fn empty_intersection_is_infeasible() {
        let mut p = unit_box(vec![0.5, 0.5]);
        p.add_cut(vec![1.0, 1.0], -1.0);
        let out = solve_projection(&p, 1e-9).unwrap();
        assert_eq!(out.status, Status::Infeasible);
    }

    #[test]
    fn many_cuts_corner() {
        // Cuts x ≤ 0.2 + 0.01 k y for k = 0..20; only k = 0 binds at (0.2, ·).
        let mut p = ProjectionProblem::new(vec![3.0, 0.7], vec![-5.0; 2], vec![5.0; 2]);
        for k in 0..20 {
            p.add_cut(vec![1.0, -0.01 * k as f64], 0.2);
        }
        let out = solve_projection(&p, 1e-9).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_abs_diff_eq!(out.x[0], 0.2, epsilon = 1e-10);
        assert_abs_diff_eq!(out.x[1], 0.7, epsilon = 1e-10);
    }
}
