//! Best-bound branch-and-bound over the binary variables of a
//! [`MixedBinaryProgram`]. Node relaxations are LPs (simplex) or, when a
//! quadratic term is present, diagonal convex QPs (active set).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::qp::{self, QpData};
use super::simplex::{self, DenseLp};
use super::{MixedBinaryProgram, Sense, SolveOutcome, SolveStats, SolverError, Status, FEAS_TOL};

/// Node budget for a single branch-and-bound solve.
pub const NODE_LIMIT: usize = 200_000;

const INT_TOL: f64 = 1e-9;

struct Relaxation<'a> {
    dense: DenseLp,
    cost: Vec<f64>,
    quad: Vec<f64>,
    quadratic: bool,
    binaries: &'a [usize],
}

struct Solved {
    x: Vec<f64>,
    value: f64,
}

impl Relaxation<'_> {
    fn solve(&self, lower: &[f64], upper: &[f64]) -> Result<Solved, Status> {
        let res = simplex::run(&self.dense, &self.cost, lower, upper, FEAS_TOL);
        if res.status != Status::Optimal && !(self.quadratic && res.status == Status::Unbounded) {
            return Err(res.status);
        }
        if !self.quadratic {
            let value = dot(&self.cost, &res.x);
            return Ok(Solved { x: res.x, value });
        }
        let data = QpData { diag: &self.quad, c: &self.cost, lower, upper, rows: &self.dense };
        let x0 = if res.status == Status::Optimal {
            res.x
        } else {
            qp::feasible_start(&data, &vec![0.0; self.cost.len()], FEAS_TOL)?
        };
        let out = qp::run(&data, x0, FEAS_TOL);
        if out.status != Status::Optimal {
            return Err(out.status);
        }
        let value = data.objective(&out.x);
        Ok(Solved { x: out.x, value })
    }

    /// Most fractional free binary; ties go to the lowest index. Binaries
    /// already fixed by branching are skipped even if the relaxation left
    /// them a hair off their bound.
    fn branching_variable(&self, x: &[f64], lower: &[f64], upper: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &b in self.binaries {
            if lower[b] == upper[b] {
                continue;
            }
            let frac = (x[b] - x[b].round()).abs();
            if frac > INT_TOL && best.map_or(true, |(bb, bf)| frac > bf + 1e-12 || (frac - bf).abs() <= 1e-12 && b < bb) {
                best = Some((b, frac));
            }
        }
        best.map(|(b, _)| b)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Node {
    bound: f64,
    id: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: the smallest bound (then the oldest node) is the greatest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

/// Solves a mixed-binary program to within `max(gap_abs, gap_rel·|bound|)`.
///
/// With both gaps at zero the search runs to closure. Incumbents always have
/// exactly integral binaries: integral relaxations are rounded and the
/// continuous part re-solved with the binaries fixed.
pub fn solve_mbp(p: &MixedBinaryProgram, gap_abs: f64, gap_rel: f64) -> Result<SolveOutcome, SolverError> {
    solve_mbp_with_limit(p, gap_abs, gap_rel, NODE_LIMIT)
}

pub fn solve_mbp_with_limit(
    p: &MixedBinaryProgram,
    gap_abs: f64,
    gap_rel: f64,
    node_limit: usize,
) -> Result<SolveOutcome, SolverError> {
    p.validate()?;
    let start = Instant::now();
    let n = p.lp.num_vars();
    let sign = if p.lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
    let quad = if p.quad.is_empty() { vec![0.0; n] } else { p.quad.clone() };
    let relax = Relaxation {
        dense: DenseLp::from_lp(&p.lp),
        cost: p.lp.objective.iter().map(|c| sign * c).collect(),
        quadratic: p.has_quadratic(),
        quad,
        binaries: &p.binaries,
    };
    let mut stats = SolveStats::default();
    let finish = |status: Status, x: Vec<f64>, mut stats: SolveStats, bound: f64| {
        stats.wall_time = start.elapsed();
        stats.bound = sign * bound + p.lp.offset;
        let objective = if x.is_empty() { f64::NAN } else { p.evaluate(&x) };
        SolveOutcome { status, x, objective, duals: None, stats }
    };

    let root = match relax.solve(&p.lp.lower, &p.lp.upper) {
        Ok(s) => s,
        Err(status) => return Ok(finish(status, Vec::new(), stats, f64::NAN)),
    };
    stats.nodes = 1;
    let mut next_id = 1;
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: root.value, id: 0, lower: p.lp.lower.clone(), upper: p.lp.upper.clone(), x: root.x });

    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let allowed = |inc: f64, bound: f64| gap_abs.max(gap_rel * bound.abs()).max(1e-11 * (1.0 + inc.abs()));

    while let Some(node) = heap.pop() {
        if let Some((_, inc)) = &incumbent {
            if node.bound >= inc - allowed(*inc, node.bound) {
                let bound = node.bound.min(*inc);
                let (x, _) = incumbent.take().unwrap();
                return Ok(finish(Status::Optimal, x, stats, bound));
            }
        }
        match relax.branching_variable(&node.x, &node.lower, &node.upper) {
            None => {
                let mut lower = node.lower.clone();
                let mut upper = node.upper.clone();
                for &b in &p.binaries {
                    let v = node.x[b].round();
                    lower[b] = v;
                    upper[b] = v;
                }
                if let Ok(s) = relax.solve(&lower, &upper) {
                    let mut x = s.x;
                    for &b in &p.binaries {
                        x[b] = lower[b];
                    }
                    if incumbent.as_ref().map_or(true, |(_, inc)| s.value < *inc) {
                        incumbent = Some((x, s.value));
                    }
                }
            }
            Some(b) => {
                for v in [0.0, 1.0] {
                    if stats.nodes >= node_limit {
                        let bound = heap.iter().map(|n| n.bound).fold(node.bound, f64::min);
                        let (x, _) = incumbent.take().unwrap_or_default();
                        let mut st = stats.clone();
                        st.message = Some("node limit reached".into());
                        return Ok(finish(Status::Limit, x, st, bound));
                    }
                    let mut lower = node.lower.clone();
                    let mut upper = node.upper.clone();
                    lower[b] = v;
                    upper[b] = v;
                    stats.nodes += 1;
                    if let Ok(s) = relax.solve(&lower, &upper) {
                        let bound = s.value.max(node.bound);
                        heap.push(Node { bound, id: next_id, lower, upper, x: s.x });
                        next_id += 1;
                    }
                }
            }
        }
    }
    match incumbent {
        Some((x, v)) => Ok(finish(Status::Optimal, x, stats, v)),
        None => Ok(finish(Status::Infeasible, Vec::new(), stats, f64::NAN)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{LinearProgram, RowKind};
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_binary() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let b = lp.add_var(0.0, 1.0, -1.0);
        let out = solve_mbp(&MixedBinaryProgram::new(lp, vec![b]), 0.0, 0.0).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_eq!(out.x, vec![1.0]);
        assert_eq!(out.objective, -1.0);
    }

    #[test]
    fn semicontinuous_dispatch() {
        // u = 1 gives min_p (−p) + 100 = 50; u = 0 forces p = 0 and value 0.
        let mut lp = LinearProgram::new(Sense::Minimize);
        let p = lp.add_var(0.0, 50.0, -1.0);
        let u = lp.add_var(0.0, 1.0, 100.0);
        lp.add_row(vec![(p, 1.0), (u, -50.0)], RowKind::Le, 0.0);
        lp.add_row(vec![(p, 1.0), (u, -10.0)], RowKind::Ge, 0.0);
        let out = solve_mbp(&MixedBinaryProgram::new(lp, vec![u]), 0.0, 0.0).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_abs_diff_eq!(out.objective, 0.0, epsilon = 1e-12);
        assert_eq!(out.x[u], 0.0);
    }

    #[test]
    fn quadratic_prox_minimizer() {
        // (ς/2)(p − 30)² with ς = 2 expands to p² − 60 p + 900.
        let mut lp = LinearProgram::new(Sense::Minimize);
        let p = lp.add_var(10.0, 50.0, -60.0);
        lp.offset = 900.0;
        let mut mbp = MixedBinaryProgram::new(lp, vec![]);
        mbp.quad = vec![2.0];
        let out = solve_mbp(&mbp, 0.0, 0.0).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_abs_diff_eq!(out.x[p], 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(out.objective, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_binary_program() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let a = lp.add_var(0.0, 1.0, 0.0);
        let b = lp.add_var(0.0, 1.0, 0.0);
        lp.add_row(vec![(a, 1.0), (b, 1.0)], RowKind::Eq, 1.0);
        lp.add_row(vec![(a, 1.0), (b, -1.0)], RowKind::Eq, 0.0);
        let out = solve_mbp(&MixedBinaryProgram::new(lp, vec![a, b]), 0.0, 0.0).unwrap();
        assert_eq!(out.status, Status::Infeasible);
    }

    #[test]
    fn node_limit_reports_limit() {
        // Knapsack-like with many fractional relaxations.
        let mut lp = LinearProgram::new(Sense::Maximize);
        let vars: Vec<usize> = (0..10).map(|k| lp.add_var(0.0, 1.0, 3.0 + k as f64 * 0.37)).collect();
        lp.add_row(vars.iter().enumerate().map(|(k, &v)| (v, 2.0 + k as f64 * 0.41)).collect(), RowKind::Le, 11.3);
        let out = solve_mbp_with_limit(&MixedBinaryProgram::new(lp, vars), 0.0, 0.0, 3).unwrap();
        assert_eq!(out.status, Status::Limit);
    }
}
