//! Continuous relaxation of the full problem: warm-start prices and the
//! reference point used by smoothing.

use serde::{Deserialize, Serialize};

use crate::model::{GeneratorSchedule, Instance};
use crate::solver::{solve_lp, LinearProgram, RowKind, Sense, Status, FEAS_TOL};

use super::{check_dim, eval_l0, formulation, GeneratorProgram, OracleError};

/// Prox centres `l^r` and `(p, u, v, w)^r`. Binaries may be fractional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub l_ref: Vec<f64>,
    pub generators: Vec<GeneratorSchedule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    /// Balance-row duals of the relaxation.
    pub prices: Vec<f64>,
    /// Optimal primal point of the relaxation.
    pub reference: ReferencePoint,
    /// Optimal value of the relaxation, including the constant `Σ C_VOLL L_t`.
    pub lp_value: f64,
}

/// Solves the relaxation (binaries in `[0, 1]`, everything else kept) and
/// returns the balance duals as prices.
///
/// With the dual of a row defined as `∂z/∂b` on `Σ_g p_t − l_t = b`, the
/// dual is directly the price `π_t` of the Lagrangian.
pub fn warm_start(inst: &Instance) -> Result<WarmStart, OracleError> {
    let mut lp = LinearProgram::new(Sense::Minimize);
    let mut blocks = Vec::with_capacity(inst.generators.len());
    for g in &inst.generators {
        let b = formulation::add_generator(&mut lp, g, inst.horizon);
        b.set_cost(&mut lp, g, &vec![0.0; inst.horizon]);
        blocks.push(b);
    }
    let served: Vec<usize> = inst.demand.iter().map(|&l| lp.add_var(0.0, l, -inst.voll)).collect();
    lp.offset = inst.demand.iter().map(|l| inst.voll * l).sum();
    let balance: Vec<usize> = (0..inst.horizon)
        .map(|t| {
            let mut row: Vec<(usize, f64)> = blocks.iter().map(|b| (b.p[t], 1.0)).collect();
            row.push((served[t], -1.0));
            lp.add_row(row, RowKind::Eq, 0.0)
        })
        .collect();
    lp.request_duals(balance);
    let out = solve_lp(&lp, FEAS_TOL)?;
    if out.status != Status::Optimal {
        return Err(OracleError::Lp { what: "warm-start relaxation".into(), status: out.status });
    }
    let prices = out.duals.clone().unwrap_or_default();
    let reference = ReferencePoint {
        l_ref: served.iter().zip(&inst.demand).map(|(&j, &l)| out.x[j].clamp(0.0, l)).collect(),
        generators: blocks.iter().map(|b| b.extract(&out.x)).collect(),
    };
    Ok(WarmStart { prices, reference, lp_value: out.objective })
}

/// Dual function of the relaxation: `L0(π)` plus each generator's LP
/// minimum over the relaxed feasible set. Never above `L(π)`.
pub fn relaxed_dual_value(inst: &Instance, pi: &[f64]) -> Result<f64, OracleError> {
    check_dim(inst, pi)?;
    let (mut value, _) = eval_l0(inst, pi);
    for (g, gen) in inst.generators.iter().enumerate() {
        let prog = GeneratorProgram::new(inst, g);
        let mut lp = prog.mbp.lp.clone();
        prog.block.set_cost(&mut lp, gen, pi);
        let out = solve_lp(&lp, FEAS_TOL)?;
        if out.status != Status::Optimal {
            return Err(OracleError::Subproblem { generator: gen.id.clone(), status: out.status });
        }
        value += out.objective;
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Generator;
    use crate::oracle::{eval_oracle, OracleOptions};

    #[test]
    fn no_generators_price_is_voll() {
        let inst = Instance { name: "z".into(), horizon: 1, voll: 3000.0, demand: vec![10.0], generators: vec![] };
        let ws = warm_start(&inst).unwrap();
        assert_eq!(ws.prices, vec![3000.0]);
        assert_eq!(ws.lp_value, 30000.0);
        assert_eq!(ws.reference.l_ref, vec![0.0]);
    }

    #[test]
    fn always_on_unit_prices_at_marginal_cost() {
        let g = Generator {
            id: "base".into(),
            p_min: 0.0,
            p_max: 100.0,
            min_up: 1,
            min_down: 1,
            startup_level: 100.0,
            shutdown_level: 100.0,
            ramp_up: 100.0,
            ramp_down: 100.0,
            cost_marginal: 25.0,
            cost_no_load: 0.0,
            cost_startup: 0.0,
            init_on: true,
            init_power: 40.0,
            init_periods_in_state: 1,
        };
        let inst = Instance { name: "on".into(), horizon: 1, voll: 3000.0, demand: vec![40.0], generators: vec![g] };
        let ws = warm_start(&inst).unwrap();
        assert!((ws.prices[0] - 25.0).abs() < 1e-9, "{:?}", ws.prices);
        assert!((ws.lp_value - 1000.0).abs() < 1e-9);
        let l = eval_oracle(&inst, &ws.prices, &OracleOptions::exact()).unwrap().value_l;
        assert!((l - ws.lp_value).abs() <= 1e-6 * ws.lp_value);
    }

    #[test]
    fn relaxed_dual_at_warm_start_equals_lp_value() {
        for inst in crate::model::tiny_corpus() {
            let ws = warm_start(&inst).unwrap();
            let r = relaxed_dual_value(&inst, &ws.prices).unwrap();
            assert!((r - ws.lp_value).abs() <= 1e-7 * ws.lp_value.abs().max(1.0), "{}: {r} vs {}", inst.name, ws.lp_value);
        }
    }
}
