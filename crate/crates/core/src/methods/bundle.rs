//! Bundle level methods. Both keep a polyhedral model
//! `max_i L̄(π_i) + ⟨g_i, π − π_i⟩`, bound the optimum between its minimum
//! (LB) and the best value seen (UB), and project onto a level set of the
//! model.

use crate::oracle::PriceBox;
use crate::solver::{solve_lp, solve_projection, LinearProgram, ProjectionProblem, RowKind, Sense, Status, FEAS_TOL};

use super::{dot, FirstOrderOracle, MethodConfig, MethodError, Recorder, RunResult, Termination};

/// Cuts inactive for this many consecutive solves are dropped when pruning.
const PRUNE_AFTER: usize = 50;

/// One linearization `L̄(π_i) + ⟨g_i, π − π_i⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub point: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
}

impl Cut {
    /// `(g_i, c_i)` such that the cut is `g_i·π + c_i`.
    fn affine(&self) -> (Vec<f64>, f64) {
        (self.grad.clone(), self.value - dot(&self.grad, &self.point))
    }

    pub fn at(&self, pi: &[f64]) -> f64 {
        self.value + dot(&self.grad, pi) - dot(&self.grad, &self.point)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Bundle {
    pub cuts: Vec<Cut>,
    idle: Vec<usize>,
    pub ub: f64,
    pub lb: f64,
}

impl Bundle {
    fn new() -> Self {
        Self { cuts: Vec::new(), idle: Vec::new(), ub: f64::INFINITY, lb: f64::NEG_INFINITY }
    }

    fn add(&mut self, cut: Cut) {
        self.ub = self.ub.min(cut.value);
        self.cuts.push(cut);
        self.idle.push(0);
    }

    /// `min_{π∈Q} max_i cut_i(π)`, as `min t` subject to every cut `≤ t`.
    fn lower_bound(&self, price_box: &PriceBox) -> Result<(f64, Vec<f64>), Termination> {
        let dim = self.cuts[0].point.len();
        let mut lp = LinearProgram::new(Sense::Minimize);
        let pi: Vec<usize> = (0..dim).map(|_| lp.add_var(price_box.pi_min, price_box.pi_max, 0.0)).collect();
        let t = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
        for cut in &self.cuts {
            let (g, c) = cut.affine();
            let mut row: Vec<(usize, f64)> = pi.iter().zip(&g).filter(|(_, &gj)| gj != 0.0).map(|(&j, &gj)| (j, gj)).collect();
            row.push((t, -1.0));
            lp.add_row(row, RowKind::Le, -c);
        }
        let out = solve_lp(&lp, FEAS_TOL).map_err(|e| Termination::Failed(format!("lower-bound LP: {e}")))?;
        if out.status != Status::Optimal {
            return Err(Termination::Failed(format!("lower-bound LP: {}", out.status)));
        }
        Ok((out.objective, out.x[..dim].to_vec()))
    }

    /// Projects `anchor` onto `{π ∈ Q : cut_i(π) ≤ level ∀i}`; `None` when
    /// that set is empty.
    fn project(&self, anchor: &[f64], level: f64, gap: f64, price_box: &PriceBox) -> Result<Option<Vec<f64>>, Termination> {
        let dim = anchor.len();
        let mut p = ProjectionProblem::new(anchor.to_vec(), vec![price_box.pi_min; dim], vec![price_box.pi_max; dim]);
        for cut in &self.cuts {
            let (g, c) = cut.affine();
            p.add_cut(g, level - c);
        }
        // Keep the feasibility tolerance below the distance to the level so
        // the anchor is not accepted as already feasible.
        let tol = FEAS_TOL.min(1e-3 * gap / (1.0 + level.abs())).max(1e-14);
        let out = solve_projection(&p, tol).map_err(|e| Termination::Failed(format!("level projection: {e}")))?;
        match out.status {
            Status::Optimal => Ok(Some(out.x)),
            Status::Infeasible => Ok(None),
            s => Err(Termination::Failed(format!("level projection: {s}"))),
        }
    }

    /// Marks cuts tight at `x` (relative to `level`) as active and drops
    /// long-idle ones, keeping at least `min_keep`.
    fn prune(&mut self, points: &[(&[f64], f64)], min_keep: usize) {
        for (i, cut) in self.cuts.iter().enumerate() {
            let tight = points.iter().any(|(x, level)| cut.at(x) >= level - 1e-7 * (1.0 + level.abs()));
            self.idle[i] = if tight { 0 } else { self.idle[i] + 1 };
        }
        let mut excess = self.cuts.len().saturating_sub(min_keep);
        let mut i = 0;
        while i < self.cuts.len() && excess > 0 {
            if self.idle[i] >= PRUNE_AFTER {
                self.cuts.remove(i);
                self.idle.remove(i);
                excess -= 1;
            } else {
                i += 1;
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Variant {
    Level,
    ProximalLevel,
}

/// Bundle Level Method: project `π^k` onto the level `LB + α(UB − LB)`.
pub fn run_blm<O: FirstOrderOracle + ?Sized>(oracle: &O, config: &MethodConfig, pi1: &[f64]) -> Result<RunResult, MethodError> {
    run(oracle, config, pi1, Variant::Level)
}

/// Bundle Proximal Level Method: the projection level only drops until the
/// gap has shrunk by a factor `1 − α`, then resets.
pub fn run_bplm<O: FirstOrderOracle + ?Sized>(oracle: &O, config: &MethodConfig, pi1: &[f64]) -> Result<RunResult, MethodError> {
    run(oracle, config, pi1, Variant::ProximalLevel)
}

fn run<O: FirstOrderOracle + ?Sized>(oracle: &O, config: &MethodConfig, pi1: &[f64], variant: Variant) -> Result<RunResult, MethodError> {
    config.validate(oracle.dim(), pi1)?;
    let alpha = config.param;
    let price_box = config.price_box;
    let mut rec = Recorder::new(oracle, config);
    let mut pi = price_box.project(pi1);
    let mut bundle = Bundle::new();
    let mut delta = f64::INFINITY;
    let mut s_prime = f64::INFINITY;
    loop {
        let e = match rec.evaluate(&pi) {
            Ok(e) => e,
            Err(t) => return Ok(rec.finish(t)),
        };
        let stop = rec.record(&pi, e.value);
        if e.grad.iter().all(|&g| g == 0.0) {
            bundle.add(Cut { point: pi.clone(), value: e.value, grad: e.grad });
            bundle.lb = bundle.lb.max(e.value);
            rec.set_extra([Some(bundle.ub), Some(bundle.lb), None]);
            return Ok(rec.finish(Termination::ZeroSubgradient));
        }
        bundle.add(Cut { point: pi.clone(), value: e.value, grad: e.grad });
        let (lp_lb, lb_point) = match bundle.lower_bound(&price_box) {
            Ok(v) => v,
            Err(t) => return Ok(rec.finish(t)),
        };
        // Cuts only accumulate, so the model minimum cannot drop; guard
        // against LP round-off.
        bundle.lb = bundle.lb.max(lp_lb).min(bundle.ub);
        let gap = bundle.ub - bundle.lb;
        let mut level = bundle.lb + alpha * gap;
        if variant == Variant::ProximalLevel {
            if gap >= (1.0 - alpha) * delta {
                s_prime = s_prime.min(level);
            } else {
                s_prime = level;
                delta = gap;
            }
        }
        let target = |s_prime: f64, level: f64| if variant == Variant::ProximalLevel { s_prime } else { level };
        rec.set_extra([Some(bundle.ub), Some(bundle.lb), Some(target(s_prime, level))]);

        let tiny = 1e-12 * bundle.ub.abs().max(1.0);
        let gap_met = config.stop.gap_target.is_some_and(|g| gap <= g)
            || config.stop.gap_target_rel.is_some_and(|r| gap <= r * bundle.ub.abs().max(1.0));
        if gap_met || gap <= tiny {
            return Ok(rec.finish(Termination::GapReached));
        }
        if let Some(t) = stop {
            return Ok(rec.finish(t));
        }

        let next = match bundle.project(&pi, target(s_prime, level), gap, &price_box) {
            Ok(Some(x)) => x,
            Ok(None) => {
                // Empty level set: recompute the bound, reset the level and
                // retry once.
                let (lp_lb, _) = match bundle.lower_bound(&price_box) {
                    Ok(v) => v,
                    Err(t) => return Ok(rec.finish(t)),
                };
                bundle.lb = bundle.lb.max(lp_lb).min(bundle.ub);
                level = bundle.lb + alpha * (bundle.ub - bundle.lb);
                s_prime = level;
                delta = bundle.ub - bundle.lb;
                rec.set_extra([Some(bundle.ub), Some(bundle.lb), Some(level)]);
                match bundle.project(&pi, level, bundle.ub - bundle.lb, &price_box) {
                    Ok(Some(x)) => x,
                    Ok(None) => return Ok(rec.finish(Termination::Failed("level set empty after reset".into()))),
                    Err(t) => return Ok(rec.finish(t)),
                }
            }
            Err(t) => return Ok(rec.finish(t)),
        };
        if config.prune_bundle {
            let keep = 2 * pi.len();
            let lvl = target(s_prime, level);
            bundle.prune(&[(&lb_point, bundle.lb), (&next, lvl)], keep);
        }
        if next == pi {
            return Ok(rec.finish(Termination::Stalled));
        }
        pi = next;
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::MethodId;
    use super::*;

    fn bounds(r: &RunResult) -> Vec<(f64, f64)> {
        r.log.iter().map(|row| (row.extra[0].unwrap(), row.extra[1].unwrap())).collect()
    }

    #[test]
    fn first_lower_bound_at_a_corner() {
        let mut b = Bundle::new();
        b.add(Cut { point: vec![0.0, 0.0], value: 1.0, grad: vec![2.0, -1.0] });
        let (lb, x) = b.lower_bound(&PriceBox::new(-10.0, 10.0)).unwrap();
        assert!((lb - (1.0 - 20.0 - 10.0)).abs() < 1e-9);
        assert!((x[0] + 10.0).abs() < 1e-9 && (x[1] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn blm_closes_the_gap_on_abs() {
        for method in [MethodId::Blm, MethodId::Bplm] {
            let r = run_method_toy(method);
            let b = bounds(&r);
            assert!(b.windows(2).all(|w| w[1].0 <= w[0].0 && w[1].1 >= w[0].1));
            let (ub_final, lb_final) = *b.last().unwrap();
            assert!(b.iter().all(|&(ub, lb)| lb <= ub_final + 1e-12 && ub >= lb_final - 1e-12));
            assert_eq!(r.termination, Termination::GapReached);
            assert!(r.returned_value <= ub_final);
        }
    }

    fn run_method_toy(method: MethodId) -> RunResult {
        let oracle = MaxAffine { pieces: vec![(vec![1.0, 0.5], -3.0), (vec![-1.0, 0.0], 3.0), (vec![0.0, -2.0], -1.0), (vec![0.2, 1.0], -4.0)] };
        let c = config(method, 0.3, 200);
        let r = if method == MethodId::Blm { run_blm(&oracle, &c, &[-9.0, 9.0]) } else { run_bplm(&oracle, &c, &[-9.0, 9.0]) };
        r.unwrap()
    }

    #[test]
    fn bplm_first_iteration_takes_the_reset_branch() {
        let r = run_method_toy(MethodId::Bplm);
        let row = &r.log[0];
        let (ub, lb, level) = (row.extra[0].unwrap(), row.extra[1].unwrap(), row.extra[2].unwrap());
        assert!((level - (lb + 0.3 * (ub - lb))).abs() < 1e-12);
    }

    #[test]
    fn pruning_keeps_convergence() {
        let oracle = abs_toy();
        let mut c = config(MethodId::Blm, 0.5, 200);
        c.prune_bundle = true;
        let r = run_blm(&oracle, &c, &[-9.0]).unwrap();
        assert!(r.returned_value < 1e-9);
    }
}
