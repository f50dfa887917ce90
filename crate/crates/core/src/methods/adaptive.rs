//! Parameter-free step sizes: D-Adaptation and DoWG.

use super::{norm, step, FirstOrderOracle, MethodConfig, MethodError, Recorder, RunResult, Termination};

/// D-Adaptation, stepping from `π^k` (or from `π¹` with `da_anchor_first`).
///
/// `D_k` is a running lower estimate of the distance to a minimizer; it is
/// logged in the first extra column with `γ^{k+1}` as the step.
pub fn run_da<O: FirstOrderOracle + ?Sized>(oracle: &O, config: &MethodConfig, pi1: &[f64]) -> Result<RunResult, MethodError> {
    config.validate(oracle.dim(), pi1)?;
    let mut rec = Recorder::new(oracle, config);
    let first = config.price_box.project(pi1);
    let mut pi = first.clone();
    let dim = pi.len();
    let mut s = vec![0.0; dim];
    let mut d = config.param;
    let mut grad_sq_sum = 0.0;
    let mut weighted = 0.0;
    let mut gamma = f64::NAN;
    loop {
        let e = match rec.evaluate(&pi) {
            Ok(e) => e,
            Err(t) => return Ok(rec.finish(t)),
        };
        let stop = rec.record(&pi, e.value);
        let g2 = e.grad.iter().map(|g| g * g).sum::<f64>();
        if g2 == 0.0 {
            rec.set_extra([Some(d), None, None]);
            return Ok(rec.finish(Termination::ZeroSubgradient));
        }
        if rec.log.len() == 1 {
            gamma = 1.0 / g2.sqrt();
        }
        // γ^k belongs to the current gradient in the weighted sum.
        weighted += gamma * d * d * g2;
        for (si, gi) in s.iter_mut().zip(&e.grad) {
            *si += d * gi;
        }
        grad_sq_sum += g2;
        let gamma_next = 1.0 / grad_sq_sum.sqrt();
        rec.set_step(gamma_next);
        rec.set_extra([Some(d), None, None]);
        let s_norm = norm(&s);
        if s_norm > 0.0 {
            d = d.max((gamma_next * s_norm * s_norm - weighted) / (2.0 * s_norm));
        }
        gamma = gamma_next;
        if let Some(t) = stop {
            return Ok(rec.finish(t));
        }
        let anchor = if config.da_anchor_first { &first } else { &pi };
        pi = step(anchor, gamma, &s, &config.price_box);
    }
}

/// Distance over Weighted Gradients. Logs `d_{k+1}` and `v^k` in the extra
/// columns and `η_k` as the step.
pub fn run_dowg<O: FirstOrderOracle + ?Sized>(oracle: &O, config: &MethodConfig, pi1: &[f64]) -> Result<RunResult, MethodError> {
    config.validate(oracle.dim(), pi1)?;
    let mut rec = Recorder::new(oracle, config);
    let first = config.price_box.project(pi1);
    let mut pi = first.clone();
    let mut d = config.param;
    let mut v = 0.0;
    loop {
        let e = match rec.evaluate(&pi) {
            Ok(e) => e,
            Err(t) => return Ok(rec.finish(t)),
        };
        let stop = rec.record(&pi, e.value);
        let g2 = e.grad.iter().map(|g| g * g).sum::<f64>();
        if g2 == 0.0 {
            return Ok(rec.finish(Termination::ZeroSubgradient));
        }
        let dist: f64 = pi.iter().zip(&first).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        d = d.max(dist);
        v += d * d * g2;
        let eta = d * d / v.sqrt();
        rec.set_step(eta);
        rec.set_extra([Some(d), Some(v), None]);
        if let Some(t) = stop {
            return Ok(rec.finish(t));
        }
        pi = step(&pi, eta, &e.grad, &config.price_box);
    }
}
