//! Fast projected gradient on the smoothed dual.

use super::{step, FirstOrderOracle, MethodConfig, MethodError, Recorder, RunResult, Termination};

/// Accelerated projected gradient on `L̄_ς` with momentum `(k−1)/(k+2)`.
///
/// The log records the unsmoothed `L̄` at each `π^k` when `fgm_eval_every`
/// is set (the default). Otherwise it records the smoothed value at the
/// extrapolated point `y^k` and only the final candidates are evaluated
/// unsmoothed.
pub fn run_fgm<O: FirstOrderOracle + ?Sized>(oracle: &O, config: &MethodConfig, pi1: &[f64]) -> Result<RunResult, MethodError> {
    config.validate(oracle.dim(), pi1)?;
    let eta = config.param;
    let mut rec = Recorder::new(oracle, config);
    let mut pi = config.price_box.project(pi1);
    let mut y = pi.clone();
    if config.fgm_eval_every {
        match rec.evaluate(&pi) {
            Ok(e) => {
                if let Some(t) = rec.record(&pi, e.value) {
                    return Ok(rec.finish(t));
                }
            }
            Err(t) => return Ok(rec.finish(t)),
        }
    }
    for k in 1.. {
        let s = match rec.evaluate_smoothed(&y) {
            Ok(s) => s,
            Err(t) => return Ok(rec.finish(t)),
        };
        if !config.fgm_eval_every {
            if let Some(t) = rec.record(&y, s.value) {
                return Ok(rec.finish(t));
            }
        }
        if s.grad.iter().all(|&g| g == 0.0) {
            return Ok(rec.finish(Termination::ZeroSubgradient));
        }
        let next = step(&y, eta, &s.grad, &config.price_box);
        let momentum = (k as f64 - 1.0) / (k as f64 + 2.0);
        y = next.iter().zip(&pi).map(|(a, b)| a + momentum * (a - b)).collect();
        pi = next;
        if config.fgm_eval_every {
            let e = match rec.evaluate(&pi) {
                Ok(e) => e,
                Err(t) => return Ok(rec.finish(t)),
            };
            rec.set_step(eta);
            if let Some(t) = rec.record(&pi, e.value) {
                return Ok(rec.finish(t));
            }
        }
    }
    unreachable!()
}
