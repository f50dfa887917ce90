use serde::{Deserialize, Serialize};

use crate::methods::{run_method, FirstOrderOracle, MethodConfig, MethodId, StoppingCriterion, Termination};

use super::BenchError;

/// How the fine grid is laid out around the coarse winner `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FineScale {
    /// `w·10^{−0.5, −0.25, 0, 0.25, 0.5}`: one decade centered at `w`.
    Log,
    /// `w + {−0.5, −0.25, 0, 0.25, 0.5}·step`, kept inside `[lo, hi]`.
    Linear { step: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub coarse: Vec<f64>,
    pub fine: FineScale,
    /// Applied to every trial.
    pub trial_stop: StoppingCriterion,
}

const FINE_OFFSETS: [f64; 5] = [-0.5, -0.25, 0.0, 0.25, 0.5];

impl TuningGrid {
    /// 11 coarse values over the method's range: logarithmic on
    /// `[1e-5, 1e5]`, or `0.09, 0.18, …, 0.99` for the bundle level
    /// parameter, which must stay below 1.
    pub fn for_method(method: MethodId, trial_stop: StoppingCriterion) -> Self {
        match method {
            MethodId::Blm | MethodId::Bplm => Self {
                coarse: (1..=11).map(|i| 0.09 * i as f64).collect(),
                fine: FineScale::Linear { step: 0.09, lo: 0.01, hi: 0.995 },
                trial_stop,
            },
            _ => Self { coarse: (-5..=5).map(|e| 10f64.powi(e)).collect(), fine: FineScale::Log, trial_stop },
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.coarse.is_empty() {
            return Err(BenchError::Grid("empty coarse grid".into()));
        }
        if self.coarse.windows(2).any(|w| w[1] < w[0]) {
            return Err(BenchError::Grid("coarse grid is not sorted".into()));
        }
        if self.trial_stop.budget.is_some_and(|b| b.is_zero()) {
            return Err(BenchError::Grid("trial budget must be positive".into()));
        }
        self.trial_stop.validate()?;
        Ok(())
    }

    /// Five values around `w`, sorted.
    pub fn fine_grid(&self, w: f64) -> Vec<f64> {
        FINE_OFFSETS
            .iter()
            .map(|&o| match self.fine {
                FineScale::Log => w * 10f64.powf(o),
                FineScale::Linear { step, lo, hi } => (w + o * step).clamp(lo, hi),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub stage: Stage,
    pub param: f64,
    /// Returned `L̄`; `None` when the trial failed.
    pub final_value: Option<f64>,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningOutcome {
    pub method: MethodId,
    pub best: f64,
    pub best_value: f64,
    pub trials: Vec<Trial>,
}

fn run_trial<O: FirstOrderOracle + ?Sized>(oracle: &O, base: &MethodConfig, pi1: &[f64], stop: &StoppingCriterion, stage: Stage, param: f64) -> Trial {
    let mut config = base.clone();
    config.param = param;
    config.stop = stop.clone();
    match run_method(oracle, &config, pi1) {
        Ok(r) if !r.termination.is_failure() => Trial {
            stage,
            param,
            final_value: Some(r.returned_value),
            iterations: r.log.len(),
            termination: Some(r.termination),
            error: None,
        },
        Ok(r) => {
            let msg = match &r.termination {
                Termination::Failed(m) => m.clone(),
                t => format!("{t:?}"),
            };
            Trial { stage, param, final_value: None, iterations: r.log.len(), termination: Some(r.termination), error: Some(msg) }
        }
        Err(e) => Trial { stage, param, final_value: None, iterations: 0, termination: None, error: Some(e.to_string()) },
    }
}

/// Lowest final value; ties go to the smaller hyperparameter.
fn winner(trials: &[Trial]) -> Option<(f64, f64)> {
    trials
        .iter()
        .filter_map(|t| t.final_value.map(|v| (t.param, v)))
        .fold(None, |acc: Option<(f64, f64)>, (p, v)| match acc {
            Some((bp, bv)) if bv < v || (bv == v && bp <= p) => Some((bp, bv)),
            _ => Some((p, v)),
        })
}

/// Coarse sweep, then a fine sweep around the coarse winner. Every trial
/// starts from `pi1` with `base` except for the hyperparameter and the
/// grid's stopping rule.
pub fn tune<O: FirstOrderOracle + ?Sized>(oracle: &O, base: &MethodConfig, pi1: &[f64], grid: &TuningGrid) -> Result<TuningOutcome, BenchError> {
    grid.validate()?;
    let mut trials: Vec<Trial> = grid.coarse.iter().map(|&p| run_trial(oracle, base, pi1, &grid.trial_stop, Stage::Coarse, p)).collect();
    let Some((coarse_best, _)) = winner(&trials) else {
        let diagnostics = trials.iter().map(|t| format!("{} = {}: {}", base.method.param_name(), t.param, t.error.as_deref().unwrap_or("?"))).collect();
        return Err(BenchError::AllTrialsFailed { method: base.method, diagnostics });
    };
    let fine: Vec<Trial> =
        grid.fine_grid(coarse_best).into_iter().map(|p| run_trial(oracle, base, pi1, &grid.trial_stop, Stage::Fine, p)).collect();
    let all: Vec<Trial> = trials.iter().chain(&fine).cloned().collect();
    // The fine grid contains the coarse winner, so it has a success unless
    // a rerun of that value failed; fall back to every trial then.
    let (best, best_value) = winner(&fine).or_else(|| winner(&all)).unwrap();
    trials.extend(fine);
    Ok(TuningOutcome { method: base.method, best, best_value, trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::Evaluation;
    use crate::oracle::{OracleError, PriceBox};

    /// `max(|x − 3|, |y + 1|)`.
    struct Toy;

    impl FirstOrderOracle for Toy {
        fn dim(&self) -> usize {
            2
        }
        fn evaluate(&self, pi: &[f64]) -> Result<Evaluation, OracleError> {
            let (a, b) = (pi[0] - 3.0, pi[1] + 1.0);
            Ok(if a.abs() >= b.abs() {
                Evaluation { value: a.abs(), grad: vec![a.signum(), 0.0] }
            } else {
                Evaluation { value: b.abs(), grad: vec![0.0, b.signum()] }
            })
        }
    }

    fn base(method: MethodId) -> MethodConfig {
        MethodConfig::new(method, 1.0, PriceBox::new(-10.0, 10.0), StoppingCriterion::iterations(30))
    }

    #[test]
    fn single_value_grid() {
        let grid = TuningGrid { coarse: vec![0.7], fine: FineScale::Log, trial_stop: StoppingCriterion::iterations(5) };
        let mut g = grid.clone();
        g.fine = FineScale::Linear { step: 0.0, lo: 0.0, hi: 10.0 };
        let out = tune(&Toy, &base(MethodId::Subg), &[0.0, 0.0], &g).unwrap();
        assert_eq!(out.best, 0.7);
        assert_eq!(out.trials.len(), 6);
    }

    #[test]
    fn protocol_row_count_and_fine_grid() {
        let grid = TuningGrid::for_method(MethodId::SubgEp, StoppingCriterion::iterations(30));
        assert_eq!(grid.coarse.len(), 11);
        let out = tune(&Toy, &base(MethodId::SubgEp), &[-8.0, 6.0], &grid).unwrap();
        assert_eq!(out.trials.len(), 16);
        assert_eq!(out.trials.iter().filter(|t| t.stage == Stage::Fine).count(), 5);
        let coarse_best = winner(&out.trials[..11]).unwrap().0;
        let fine: Vec<f64> = out.trials[11..].iter().map(|t| t.param).collect();
        assert!((fine[0] * 10f64.sqrt() - coarse_best).abs() < 1e-12 * coarse_best);
        assert!((fine[4] / 10f64.sqrt() - coarse_best).abs() < 1e-12 * coarse_best);
    }

    #[test]
    fn winner_matches_sweep_minimizer() {
        // A known unimodal response: sweep the coarse values directly and
        // check the tuner agrees with the best of them.
        let grid = TuningGrid {
            coarse: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            fine: FineScale::Linear { step: 0.0, lo: 0.0, hi: 1e9 },
            trial_stop: StoppingCriterion::iterations(20),
        };
        let b = base(MethodId::Subg);
        let sweep: Vec<(f64, f64)> = grid
            .coarse
            .iter()
            .map(|&p| {
                let mut c = b.clone();
                c.param = p;
                c.stop = grid.trial_stop.clone();
                (p, run_method(&Toy, &c, &[-8.0, 6.0]).unwrap().returned_value)
            })
            .collect();
        let expect = sweep.iter().fold(sweep[0], |a, &x| if x.1 < a.1 { x } else { a });
        let out = tune(&Toy, &b, &[-8.0, 6.0], &grid).unwrap();
        assert_eq!(out.best, expect.0);
    }

    #[test]
    fn ties_prefer_smaller_values() {
        let t = |p, v| Trial { stage: Stage::Coarse, param: p, final_value: Some(v), iterations: 1, termination: None, error: None };
        assert_eq!(winner(&[t(3.0, 1.0), t(1.0, 1.0), t(2.0, 1.0)]), Some((1.0, 1.0)));
    }

    #[test]
    fn all_failing_trials_are_an_error() {
        let grid = TuningGrid { coarse: vec![1.0, 2.0], fine: FineScale::Log, trial_stop: StoppingCriterion::iterations(5) };
        // FGM needs a smoothed oracle, which the toy lacks.
        let err = tune(&Toy, &base(MethodId::Fgm), &[0.0, 0.0], &grid).unwrap_err();
        assert!(matches!(err, BenchError::AllTrialsFailed { .. }));
    }

    #[test]
    fn bundle_grid_stays_inside_the_domain() {
        let grid = TuningGrid::for_method(MethodId::Blm, StoppingCriterion::iterations(5));
        assert!(grid.coarse.iter().chain(&grid.fine_grid(0.99)).chain(&grid.fine_grid(0.09)).all(|&a| a > 0.0 && a < 1.0));
    }
}
