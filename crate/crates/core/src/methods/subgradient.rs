//! Projected subgradient methods.

use std::time::Instant;

use super::{norm, step, Clock, FirstOrderOracle, MethodConfig, MethodError, Recorder, RunResult, Termination};

/// Vanishing normalized steps `η/k`.
pub fn run_subg<O: FirstOrderOracle + ?Sized>(oracle: &O, config: &MethodConfig, pi1: &[f64]) -> Result<RunResult, MethodError> {
    config.validate(oracle.dim(), pi1)?;
    let eta = config.param;
    let mut rec = Recorder::new(oracle, config);
    let mut pi = config.price_box.project(pi1);
    for k in 1.. {
        let e = match rec.evaluate(&pi) {
            Ok(e) => e,
            Err(t) => return Ok(rec.finish(t)),
        };
        let stop = rec.record(&pi, e.value);
        let gn = norm(&e.grad);
        if gn == 0.0 {
            return Ok(rec.finish(Termination::ZeroSubgradient));
        }
        let h = eta / k as f64;
        rec.set_step(h);
        if let Some(t) = stop {
            return Ok(rec.finish(t));
        }
        pi = step(&pi, h / gn, &e.grad, &config.price_box);
    }
    unreachable!()
}

/// Estimated Polyak steps, or exact ones when `exact_polyak` carries `L̄*`.
pub fn run_subg_ep<O: FirstOrderOracle + ?Sized>(oracle: &O, config: &MethodConfig, pi1: &[f64]) -> Result<RunResult, MethodError> {
    config.validate(oracle.dim(), pi1)?;
    let alpha = config.param;
    let mut rec = Recorder::new(oracle, config);
    let mut pi = config.price_box.project(pi1);
    for k in 1.. {
        let e = match rec.evaluate(&pi) {
            Ok(e) => e,
            Err(t) => return Ok(rec.finish(t)),
        };
        let stop = rec.record(&pi, e.value);
        let g2 = e.grad.iter().map(|g| g * g).sum::<f64>();
        if g2 == 0.0 {
            return Ok(rec.finish(Termination::ZeroSubgradient));
        }
        let coef = match config.exact_polyak {
            Some(opt) => {
                if e.value <= opt {
                    return Ok(rec.finish(Termination::TargetReached));
                }
                (e.value - opt) / g2
            }
            None => (e.value - rec.best_value() + alpha / k as f64) / g2,
        };
        rec.set_step(coef);
        if let Some(t) = stop {
            return Ok(rec.finish(t));
        }
        pi = step(&pi, coef, &e.grad, &config.price_box);
    }
    unreachable!()
}

/// Number of SUBG-L steps: explicit, else one less than the iteration cap
/// (the final iterate is evaluated too), else from a 5-evaluation timing
/// probe against the budget.
fn subg_l_steps<O: FirstOrderOracle + ?Sized>(oracle: &O, config: &MethodConfig, pi1: &[f64]) -> Result<usize, Termination> {
    if let Some(n) = config.subg_l_steps {
        return Ok(n.max(1));
    }
    if let Some(n) = config.stop.max_iterations {
        return Ok(n.saturating_sub(1).max(1));
    }
    let budget = config.stop.budget.map_or(0.0, |b| b.as_secs_f64());
    let per_iter = match config.stop.clock {
        Clock::Virtual { seconds_per_iteration } => seconds_per_iteration,
        Clock::Wall => {
            let start = Instant::now();
            for _ in 0..5 {
                oracle.evaluate(pi1).map_err(|e| Termination::Failed(e.to_string()))?;
            }
            start.elapsed().as_secs_f64() / 5.0
        }
    };
    Ok(((budget / per_iter.max(1e-12)).floor() as usize).saturating_sub(1).max(1))
}

/// Last-iterate optimal steps `R(N+1−k)/√((N+1)³)`. The answer is
/// `π^{N+1}`.
pub fn run_subg_l<O: FirstOrderOracle + ?Sized>(oracle: &O, config: &MethodConfig, pi1: &[f64]) -> Result<RunResult, MethodError> {
    config.validate(oracle.dim(), pi1)?;
    let r = config.param;
    let mut rec = Recorder::new(oracle, config);
    let mut pi = config.price_box.project(pi1);
    let n = match subg_l_steps(oracle, config, &pi) {
        Ok(n) => n,
        Err(t) => return Ok(rec.finish(t)),
    };
    let denom = ((n + 1) as f64).powi(3).sqrt();
    for k in 1..=n + 1 {
        let e = match rec.evaluate(&pi) {
            Ok(e) => e,
            Err(t) => return Ok(rec.finish(t)),
        };
        let stop = rec.record(&pi, e.value);
        if k == n + 1 {
            break;
        }
        let gn = norm(&e.grad);
        if gn == 0.0 {
            // The remaining steps would all be no-ops.
            return Ok(rec.finish(Termination::ZeroSubgradient));
        }
        let h = r * (n + 1 - k) as f64 / denom;
        rec.set_step(h);
        if let Some(t) = stop {
            return Ok(rec.finish(t));
        }
        pi = step(&pi, h / gn, &e.grad, &config.price_box);
    }
    Ok(rec.finish(Termination::StepsDone))
}
