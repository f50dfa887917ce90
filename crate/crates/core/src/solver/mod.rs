//! Inner mathematical-programming layer.
//!
//! Three problem classes are exposed behind one result type:
//!
//! * [`LinearProgram`]: solved by a bounded-variable primal simplex
//!   ([`solve_lp`]).
//! * [`ProjectionProblem`]: Euclidean projection onto a box intersected with
//!   half-spaces, solved by an active-set method ([`solve_projection`]).
//! * [`MixedBinaryProgram`]: linear or diagonal-convex-quadratic objective with
//!   designated binary variables, solved by best-bound branch-and-bound
//!   ([`solve_mbp`]).
//!
//! Duals follow one convention everywhere: the dual of a row is the
//! sensitivity `∂z/∂b` of the optimal objective `z` with respect to the row's
//! right-hand side. For a minimization problem the dual of an active `a·x ≤ b`
//! row is therefore `≤ 0`.

mod branch;
mod dump;
mod qp;
mod simplex;

use std::time::Duration;

use thiserror::Error;

pub use branch::{solve_mbp, solve_mbp_with_limit, NODE_LIMIT};
pub use qp::solve_projection;
pub use simplex::solve_lp;

/// Default primal feasibility tolerance (on rows scaled to unit max-norm).
pub const FEAS_TOL: f64 = 1e-9;

/// Default relative MIP gap used by oracle calls.
pub const DEFAULT_GAP_REL: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("malformed problem: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// `a·x ≤ rhs`
    Le,
    /// `a·x ≥ rhs`
    Ge,
    /// `a·x = rhs`
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

impl Row {
    pub fn new(coefs: Vec<(usize, f64)>, kind: RowKind, rhs: f64) -> Self {
        Self { coefs, kind, rhs }
    }

    /// Activity bounds `[lo, hi]` of the row.
    pub(crate) fn range(&self) -> (f64, f64) {
        match self.kind {
            RowKind::Le => (f64::NEG_INFINITY, self.rhs),
            RowKind::Ge => (self.rhs, f64::INFINITY),
            RowKind::Eq => (self.rhs, self.rhs),
        }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

/// `min/max c·x + offset  s.t.  rows,  lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub offset: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
    /// Rows whose duals should be reported, in this order.
    pub dual_rows: Vec<usize>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            objective: Vec::new(),
            offset: 0.0,
            lower: Vec::new(),
            upper: Vec::new(),
            rows: Vec::new(),
            dual_rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, coefs: Vec<(usize, f64)>, kind: RowKind, rhs: f64) -> usize {
        self.rows.push(Row::new(coefs, kind, rhs));
        self.rows.len() - 1
    }

    pub fn request_duals(&mut self, rows: impl IntoIterator<Item = usize>) {
        self.dual_rows.extend(rows);
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let n = self.objective.len();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(SolverError::Dimension(format!(
                "{} objective coefficients but {} lower / {} upper bounds",
                n,
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in &row.coefs {
                if j >= n {
                    return Err(SolverError::Dimension(format!(
                        "row {i} references column {j} but there are {n} columns"
                    )));
                }
                if !a.is_finite() {
                    return Err(SolverError::Malformed(format!("row {i} has a non-finite coefficient")));
                }
            }
            if row.rhs.is_nan() {
                return Err(SolverError::Malformed(format!("row {i} has a NaN right-hand side")));
            }
        }
        for &r in &self.dual_rows {
            if r >= self.rows.len() {
                return Err(SolverError::Dimension(format!("dual requested for missing row {r}")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(SolverError::Malformed("non-finite objective coefficient".into()));
        }
        Ok(())
    }

    /// Objective value (including offset) at `x`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest violation of bounds or rows at `x`, in absolute terms.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..x.len() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for row in &self.rows {
            let (lo, hi) = row.range();
            let act = row.activity(x);
            worst = worst.max(lo - act).max(act - hi);
        }
        worst
    }
}

/// A [`LinearProgram`] with designated binary variables and an optional
/// separable convex quadratic term `½ Σ_j quad[j]·x_j²` (minimization only).
#[derive(Debug, Clone, PartialEq)]
pub struct MixedBinaryProgram {
    pub lp: LinearProgram,
    pub binaries: Vec<usize>,
    /// Diagonal of the quadratic term; empty means purely linear.
    pub quad: Vec<f64>,
}

impl MixedBinaryProgram {
    pub fn new(lp: LinearProgram, binaries: Vec<usize>) -> Self {
        Self { lp, binaries, quad: Vec::new() }
    }

    pub fn has_quadratic(&self) -> bool {
        self.quad.iter().any(|&q| q != 0.0)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        self.lp.validate()?;
        let n = self.lp.num_vars();
        if !self.quad.is_empty() && self.quad.len() != n {
            return Err(SolverError::Dimension(format!(
                "quadratic diagonal has {} entries for {} variables",
                self.quad.len(),
                n
            )));
        }
        if self.quad.iter().any(|&q| !(q >= 0.0) || !q.is_finite()) {
            return Err(SolverError::Malformed("quadratic coefficients must be finite and ≥ 0".into()));
        }
        if self.has_quadratic() && self.lp.sense == Sense::Maximize {
            return Err(SolverError::Malformed("quadratic objectives must be minimized".into()));
        }
        for &b in &self.binaries {
            if b >= n {
                return Err(SolverError::Dimension(format!("binary index {b} out of range")));
            }
            if self.lp.lower[b] < 0.0 || self.lp.upper[b] > 1.0 {
                return Err(SolverError::Malformed(format!("binary variable {b} must have bounds within [0, 1]")));
            }
            if self.quad.get(b).copied().unwrap_or(0.0) != 0.0 {
                return Err(SolverError::Malformed(format!("binary variable {b} carries a quadratic term")));
            }
        }
        Ok(())
    }

    /// Full objective (linear, quadratic and offset) at `x`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let quad: f64 = self.quad.iter().zip(x).map(|(q, v)| 0.5 * q * v * v).sum();
        self.lp.evaluate(x) + quad
    }
}

/// `min ‖x − anchor‖²  s.t.  lower ≤ x ≤ upper,  a_i·x ≤ b_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionProblem {
    pub anchor: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cuts: Vec<(Vec<f64>, f64)>,
}

impl ProjectionProblem {
    pub fn new(anchor: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { anchor, lower, upper, cuts: Vec::new() }
    }

    pub fn add_cut(&mut self, a: Vec<f64>, b: f64) {
        self.cuts.push((a, b));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration/node limit or numerical trouble; the point (if any) is the
    /// best found.
    Limit,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::Limit => "limit",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub nodes: usize,
    pub wall_time: Duration,
    /// Best proven bound (branch-and-bound) or objective (otherwise).
    pub bound: f64,
    /// KKT residual of the final point (projection only).
    pub kkt_residual: f64,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Duals of `LinearProgram::dual_rows`, when requested and optimal.
    pub duals: Option<Vec<f64>>,
    pub stats: SolveStats,
}

impl SolveOutcome {
    pub(crate) fn without_point(status: Status, stats: SolveStats) -> Self {
        Self { status, x: Vec::new(), objective: f64::NAN, duals: None, stats }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}
