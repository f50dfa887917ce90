//! The 3-bin generator feasible set as rows of a [`LinearProgram`].

use crate::model::{Generator, GeneratorSchedule};
use crate::solver::{LinearProgram, RowKind};

/// Variable indices of one generator block.
#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub p: Vec<usize>,
    pub u: Vec<usize>,
    pub v: Vec<usize>,
    pub w: Vec<usize>,
}

impl Block {
    pub fn binaries(&self) -> impl Iterator<Item = usize> + '_ {
        self.u.iter().chain(&self.v).chain(&self.w).copied()
    }

    pub fn extract(&self, x: &[f64]) -> GeneratorSchedule {
        let take = |idx: &[usize]| idx.iter().map(|&j| x[j]).collect();
        GeneratorSchedule { p: take(&self.p), u: take(&self.u), v: take(&self.v), w: take(&self.w) }
    }

    /// Sets the objective to the generation cost minus `π·p`.
    pub fn set_cost(&self, lp: &mut LinearProgram, g: &Generator, pi: &[f64]) {
        for t in 0..self.p.len() {
            lp.objective[self.p[t]] = g.cost_marginal - pi[t];
            lp.objective[self.u[t]] = g.cost_no_load;
            lp.objective[self.v[t]] = g.cost_startup;
            lp.objective[self.w[t]] = 0.0;
        }
    }
}

/// Adds the variables and rows of `g` with zero cost. Binaries get bounds
/// `[0, 1]`; commitments forced by the initial state are fixed through their
/// bounds.
pub(crate) fn add_generator(lp: &mut LinearProgram, g: &Generator, horizon: usize) -> Block {
    let p: Vec<usize> = (0..horizon).map(|_| lp.add_var(0.0, g.p_max, 0.0)).collect();
    let u: Vec<usize> = (0..horizon).map(|_| lp.add_var(0.0, 1.0, 0.0)).collect();
    let v: Vec<usize> = (0..horizon).map(|_| lp.add_var(0.0, 1.0, 0.0)).collect();
    let w: Vec<usize> = (0..horizon).map(|_| lp.add_var(0.0, 1.0, 0.0)).collect();
    let u0 = g.init_u();
    for &j in &u[..g.forced_periods(horizon)] {
        lp.lower[j] = u0;
        lp.upper[j] = u0;
    }
    for t in 0..horizon {
        // Logical coupling.
        if t == 0 {
            lp.add_row(vec![(u[0], 1.0), (v[0], -1.0), (w[0], 1.0)], RowKind::Eq, u0);
        } else {
            lp.add_row(vec![(u[t], 1.0), (u[t - 1], -1.0), (v[t], -1.0), (w[t], 1.0)], RowKind::Eq, 0.0);
        }
        // Minimum up and down time windows, truncated at the first period.
        let lo = (t + 1).saturating_sub(g.min_up as usize);
        let mut row: Vec<(usize, f64)> = (lo..=t).map(|i| (v[i], 1.0)).collect();
        row.push((u[t], -1.0));
        lp.add_row(row, RowKind::Le, 0.0);
        let lo = (t + 1).saturating_sub(g.min_down as usize);
        let mut row: Vec<(usize, f64)> = (lo..=t).map(|i| (w[i], 1.0)).collect();
        row.push((u[t], 1.0));
        lp.add_row(row, RowKind::Le, 1.0);
        // Capacity.
        lp.add_row(vec![(p[t], 1.0), (u[t], -g.p_min)], RowKind::Ge, 0.0);
        lp.add_row(vec![(p[t], 1.0), (u[t], -g.p_max)], RowKind::Le, 0.0);
        // Ramping with startup and shutdown levels.
        if t == 0 {
            lp.add_row(vec![(p[0], 1.0), (v[0], -g.startup_level)], RowKind::Le, g.init_power + g.ramp_up * u0);
            lp.add_row(vec![(p[0], -1.0), (u[0], -g.ramp_down), (w[0], -g.shutdown_level)], RowKind::Le, -g.init_power);
        } else {
            lp.add_row(
                vec![(p[t], 1.0), (p[t - 1], -1.0), (u[t - 1], -g.ramp_up), (v[t], -g.startup_level)],
                RowKind::Le,
                0.0,
            );
            lp.add_row(
                vec![(p[t - 1], 1.0), (p[t], -1.0), (u[t], -g.ramp_down), (w[t], -g.shutdown_level)],
                RowKind::Le,
                0.0,
            );
        }
    }
    Block { p, u, v, w }
}
