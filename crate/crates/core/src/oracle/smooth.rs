//! Proximally smoothed dual: each sub-problem gets `(ς/2)‖x − x^r‖²` added
//! to its minimized objective.

use crate::model::{GeneratorSchedule, Instance};

use super::{check_dim, DualOracle, GeneratorProgram, OracleError, OracleOptions, ReferencePoint};

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedOracleResult {
    /// `L_ς(π)`.
    pub value: f64,
    /// Gradient of `−L_ς`: `Σ_g p_ς,g − l_ς`.
    pub gradient: Vec<f64>,
    pub sigma: f64,
    pub per_gen_values: Vec<f64>,
    pub l0_value: f64,
    pub l_star: Vec<f64>,
    pub points: Vec<GeneratorSchedule>,
}

fn check_sigma(sigma: f64) -> Result<(), OracleError> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(OracleError::Sigma(sigma))
    }
}

/// Smoothed demand part with `l*_t = clamp(l^r_t + (C_VOLL − π_t)/ς, 0, L_t)`.
pub fn eval_l0_smoothed(inst: &Instance, pi: &[f64], sigma: f64, reference: &ReferencePoint) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut l_star = Vec::with_capacity(inst.horizon);
    for (t, &demand) in inst.demand.iter().enumerate() {
        let lr = reference.l_ref[t];
        let l = (lr + (inst.voll - pi[t]) / sigma).clamp(0.0, demand);
        value += inst.voll * (demand - l) + pi[t] * l + 0.5 * sigma * (l - lr) * (l - lr);
        l_star.push(l);
    }
    (value, l_star)
}

impl GeneratorProgram {
    /// Adds the prox term around `r`. On `p` it is a true quadratic; on each
    /// binary `b` it is replaced by `(ς/2)((1 − 2r) b + r²)`, equal to
    /// `(ς/2)(b − r)²` whenever `b ∈ {0, 1}`.
    fn smoothed(&self, inst: &Instance, g: usize, pi: &[f64], sigma: f64, r: &GeneratorSchedule) -> crate::solver::MixedBinaryProgram {
        let mut mbp = self.mbp.clone();
        self.block.set_cost(&mut mbp.lp, &inst.generators[g], pi);
        let n = mbp.lp.num_vars();
        mbp.quad = vec![0.0; n];
        let half = 0.5 * sigma;
        for t in 0..inst.horizon {
            let j = self.block.p[t];
            mbp.quad[j] = sigma;
            mbp.lp.objective[j] -= sigma * r.p[t];
            mbp.lp.offset += half * r.p[t] * r.p[t];
            for (idx, rv) in [(&self.block.u, &r.u), (&self.block.v, &r.v), (&self.block.w, &r.w)] {
                mbp.lp.objective[idx[t]] += half * (1.0 - 2.0 * rv[t]);
                mbp.lp.offset += half * rv[t] * rv[t];
            }
        }
        mbp
    }
}

/// Smoothed `Lg` and its minimizer.
pub fn eval_lg_smoothed(
    inst: &Instance,
    g: usize,
    pi: &[f64],
    sigma: f64,
    reference: &ReferencePoint,
    opts: &OracleOptions,
) -> Result<(f64, GeneratorSchedule), OracleError> {
    check_dim(inst, pi)?;
    check_sigma(sigma)?;
    let prog = GeneratorProgram::new(inst, g);
    let mbp = prog.smoothed(inst, g, pi, sigma, &reference.generators[g]);
    let (v, s, _) = prog.solve(inst, g, &mbp, opts)?;
    Ok((v, s))
}

pub fn eval_smoothed_oracle(
    inst: &Instance,
    pi: &[f64],
    sigma: f64,
    reference: &ReferencePoint,
    opts: &OracleOptions,
) -> Result<SmoothedOracleResult, OracleError> {
    DualOracle::new(inst, *opts).eval_smoothed(pi, sigma, reference)
}

impl DualOracle<'_> {
    pub fn eval_smoothed(&self, pi: &[f64], sigma: f64, reference: &ReferencePoint) -> Result<SmoothedOracleResult, OracleError> {
        check_dim(self.inst, pi)?;
        check_sigma(sigma)?;
        let (l0_value, l_star) = eval_l0_smoothed(self.inst, pi, sigma, reference);
        let mut gradient: Vec<f64> = l_star.iter().map(|l| -l).collect();
        let mut value = l0_value;
        let mut per_gen_values = Vec::new();
        let mut points = Vec::new();
        for (g, prog) in self.programs().iter().enumerate() {
            let mbp = prog.smoothed(self.inst, g, pi, sigma, &reference.generators[g]);
            let (v, s, _) = prog.solve(self.inst, g, &mbp, &self.opts)?;
            value += v;
            for (gt, p) in gradient.iter_mut().zip(&s.p) {
                *gt += p;
            }
            per_gen_values.push(v);
            points.push(s);
        }
        Ok(SmoothedOracleResult { value, gradient, sigma, per_gen_values, l0_value, l_star, points })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::tests::example_instance;
    use crate::oracle::{eval_lg, eval_oracle};

    fn reference(inst: &Instance, l_ref: Vec<f64>) -> ReferencePoint {
        ReferencePoint { l_ref, generators: inst.generators.iter().map(|_| GeneratorSchedule::off(inst.horizon)).collect() }
    }

    fn one_period(l: f64) -> Instance {
        Instance { name: "s".into(), horizon: 1, voll: 3000.0, demand: vec![l], generators: vec![] }
    }

    #[test]
    fn l0_tie_returns_reference() {
        let inst = one_period(10.0);
        let (_, l) = eval_l0_smoothed(&inst, &[3000.0], 1.0, &reference(&inst, vec![4.0]));
        assert_eq!(l, vec![4.0]);
    }

    #[test]
    fn l0_large_sigma_tends_to_reference() {
        let inst = one_period(10.0);
        let (_, l) = eval_l0_smoothed(&inst, &[100.0], 1e12, &reference(&inst, vec![4.0]));
        assert!((l[0] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn l0_clamped_to_demand() {
        let inst = one_period(5.0);
        let r = reference(&inst, vec![0.0]);
        let (value, l) = eval_l0_smoothed(&inst, &[2000.0], 100.0, &r);
        assert_eq!(l, vec![5.0]);
        // Grid minimization of the 1-d objective.
        let f = |l: f64| 3000.0 * (5.0 - l) + 2000.0 * l + 50.0 * l * l;
        let best = (0..=5000).map(|k| f(k as f64 * 1e-3)).fold(f64::INFINITY, f64::min);
        assert!((value - best).abs() < 1e-9);
    }

    #[test]
    fn tiny_sigma_matches_unsmoothed() {
        let inst = example_instance();
        let r = reference(&inst, vec![0.0, 0.0]);
        let (v, _) = eval_lg_smoothed(&inst, 0, &[100.0, 100.0], 1e-8, &r, &OracleOptions::exact()).unwrap();
        assert!((v + 7890.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn reference_at_minimizer_has_no_prox_cost() {
        let inst = example_instance();
        let pi = [100.0, 100.0];
        let (v, s) = eval_lg(&inst, 0, &pi, &OracleOptions::exact()).unwrap();
        let r = ReferencePoint { l_ref: vec![0.0, 0.0], generators: vec![s] };
        let (vs, _) = eval_lg_smoothed(&inst, 0, &pi, 3.0, &r, &OracleOptions::exact()).unwrap();
        assert!((vs - v).abs() <= 1e-9 * v.abs(), "{vs} vs {v}");
    }

    #[test]
    fn linearized_binaries_match_direct_prox() {
        let inst = example_instance();
        let pi = [60.0, 25.0];
        let gr = GeneratorSchedule { p: vec![20.0, 35.5], u: vec![0.5, 0.25], v: vec![0.5, 0.0], w: vec![0.0, 0.25] };
        let r = ReferencePoint { l_ref: vec![0.0, 0.0], generators: vec![gr.clone()] };
        let sigma = 0.75;
        let (v, s) = eval_lg_smoothed(&inst, 0, &pi, sigma, &r, &OracleOptions::exact()).unwrap();
        let g = &inst.generators[0];
        let mut direct = s.cost(g) - pi.iter().zip(&s.p).map(|(a, b)| a * b).sum::<f64>();
        for t in 0..2 {
            for (x, y) in [(s.p[t], gr.p[t]), (s.u[t], gr.u[t]), (s.v[t], gr.v[t]), (s.w[t], gr.w[t])] {
                direct += 0.5 * sigma * (x - y) * (x - y);
            }
        }
        assert!((v - direct).abs() <= 1e-9 * (1.0 + v.abs()), "{v} vs {direct}");
    }

    #[test]
    fn zero_generators_gradient() {
        let inst = one_period(10.0);
        let r = reference(&inst, vec![3.0]);
        let out = eval_smoothed_oracle(&inst, &[2999.0], 0.5, &r, &OracleOptions::exact()).unwrap();
        assert_eq!(out.gradient, vec![-5.0]);
        let unsmoothed = eval_oracle(&inst, &[2999.0], &OracleOptions::exact()).unwrap();
        assert!(out.value >= unsmoothed.value_l);
    }

    #[test]
    fn rejects_nonpositive_sigma() {
        let inst = one_period(10.0);
        let r = reference(&inst, vec![3.0]);
        assert!(matches!(eval_smoothed_oracle(&inst, &[1.0], 0.0, &r, &OracleOptions::exact()), Err(OracleError::Sigma(_))));
    }
}
