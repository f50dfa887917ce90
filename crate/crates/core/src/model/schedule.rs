use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Generator, Instance};

/// Power and the three binaries of one generator over the horizon.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GeneratorSchedule {
    pub p: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl GeneratorSchedule {
    pub fn off(horizon: usize) -> Self {
        Self { p: vec![0.0; horizon], u: vec![0.0; horizon], v: vec![0.0; horizon], w: vec![0.0; horizon] }
    }

    /// Builds the unique `(v, w)` implied by a commitment pattern and `u0`.
    pub fn from_commitment(p: Vec<f64>, u: Vec<f64>, u0: f64) -> Self {
        let mut v = vec![0.0; u.len()];
        let mut w = vec![0.0; u.len()];
        let mut prev = u0;
        for t in 0..u.len() {
            let d = u[t] - prev;
            if d > 0.0 {
                v[t] = d;
            } else {
                w[t] = -d;
            }
            prev = u[t];
        }
        Self { p, u, v, w }
    }

    pub fn cost(&self, g: &Generator) -> f64 {
        (0..self.p.len()).map(|t| g.period_cost(self.p[t], self.u[t], self.v[t])).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Schedule {
    pub generators: Vec<GeneratorSchedule>,
    /// Demand served `l_t`.
    pub served: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("schedule has {got} generators, instance has {expected}")]
    GeneratorCount { expected: usize, got: usize },
    #[error("{what} has length {got}, horizon is {expected}")]
    Length { what: String, expected: usize, got: usize },
}

/// One failed constraint. `generator` is `None` for served-demand bounds;
/// `t` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub generator: Option<String>,
    pub t: usize,
    pub constraint: &'static str,
    pub excess: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.generator {
            Some(g) => write!(f, "{g} t={}: {} violated by {:e}", self.t, self.constraint, self.excess),
            None => write!(f, "t={}: {} violated by {:e}", self.t, self.constraint, self.excess),
        }
    }
}

/// Checks the generator feasible sets and `0 ≤ l ≤ L`.
///
/// Returns `Ok(violations)`; the schedule is feasible iff the list is empty.
/// Power constraints use an absolute tolerance of `1e-7·(1 + p_max)`,
/// binaries must be within `1e-9` of 0 or 1.
pub fn check_schedule(inst: &Instance, s: &Schedule) -> Result<Vec<Violation>, ScheduleError> {
    let horizon = inst.horizon;
    if s.generators.len() != inst.generators.len() {
        return Err(ScheduleError::GeneratorCount { expected: inst.generators.len(), got: s.generators.len() });
    }
    let len = |what: String, got: usize| {
        if got == horizon {
            Ok(())
        } else {
            Err(ScheduleError::Length { what, expected: horizon, got })
        }
    };
    len("served".into(), s.served.len())?;
    for (g, gs) in inst.generators.iter().zip(&s.generators) {
        len(format!("{}.p", g.id), gs.p.len())?;
        len(format!("{}.u", g.id), gs.u.len())?;
        len(format!("{}.v", g.id), gs.v.len())?;
        len(format!("{}.w", g.id), gs.w.len())?;
    }

    let mut out = Vec::new();
    for (g, gs) in inst.generators.iter().zip(&s.generators) {
        check_generator(g, gs, horizon, &mut out);
    }
    let tol = 1e-7;
    for t in 0..horizon {
        let l = s.served[t];
        let scale = tol * (1.0 + inst.demand[t].abs());
        if l < -scale || l > inst.demand[t] + scale || !l.is_finite() {
            let excess = if l < 0.0 { -l } else { l - inst.demand[t] };
            out.push(Violation { generator: None, t: t + 1, constraint: "served bounds", excess });
        }
    }
    Ok(out)
}

pub(crate) fn check_generator(g: &Generator, gs: &GeneratorSchedule, horizon: usize, out: &mut Vec<Violation>) {
    let tol = 1e-7 * (1.0 + g.p_max.abs());
    let mut push = |t: usize, constraint: &'static str, excess: f64| {
        out.push(Violation { generator: Some(g.id.clone()), t: t + 1, constraint, excess });
    };
    let bin_tol = 1e-9;
    for t in 0..horizon {
        for (name, b) in [("u binary", gs.u[t]), ("v binary", gs.v[t]), ("w binary", gs.w[t])] {
            let dist = b.abs().min((b - 1.0).abs());
            if !(dist <= bin_tol) {
                push(t, name, dist);
            }
        }
    }
    let u0 = g.init_u();
    let forced = g.forced_periods(horizon);
    for t in 0..horizon {
        let u_prev = if t == 0 { u0 } else { gs.u[t - 1] };
        let p_prev = if t == 0 { g.init_power } else { gs.p[t - 1] };
        let logic = (gs.u[t] - u_prev) - (gs.v[t] - gs.w[t]);
        if logic.abs() > bin_tol {
            push(t, "logic", logic.abs());
        }
        let up_lo = (t + 1).saturating_sub(g.min_up as usize);
        let ups: f64 = gs.v[up_lo..=t].iter().sum();
        if ups - gs.u[t] > bin_tol {
            push(t, "min up", ups - gs.u[t]);
        }
        let down_lo = (t + 1).saturating_sub(g.min_down as usize);
        let downs: f64 = gs.w[down_lo..=t].iter().sum();
        if downs - (1.0 - gs.u[t]) > bin_tol {
            push(t, "min down", downs - (1.0 - gs.u[t]));
        }
        if t < forced && (gs.u[t] - u0).abs() > bin_tol {
            push(t, "initial state", (gs.u[t] - u0).abs());
        }
        let lo = g.p_min * gs.u[t] - gs.p[t];
        if lo > tol || gs.p[t].is_nan() {
            push(t, "capacity min", lo);
        }
        let hi = gs.p[t] - g.p_max * gs.u[t];
        if hi > tol {
            push(t, "capacity max", hi);
        }
        let ru = gs.p[t] - p_prev - (g.ramp_up * u_prev + g.startup_level * gs.v[t]);
        if ru > tol {
            push(t, "ramp up", ru);
        }
        let rd = p_prev - gs.p[t] - (g.ramp_down * gs.u[t] + g.shutdown_level * gs.w[t]);
        if rd > tol {
            push(t, "ramp down", rd);
        }
    }
}
