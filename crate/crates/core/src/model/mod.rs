//! Unit-commitment instance data: generators, demand, lost-load cost, and the
//! per-generator schedules that the dual oracle produces.
//!
//! All quantities are per period: costs per period, ramps per period. There
//! is no explicit period length.

mod generate;
mod native;
mod pglib;
mod schedule;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use generate::{random_tiny_instance, tiny_corpus, tight_relaxation_family, TinySpec};
pub use native::{load_native, parse_native, parse_native_unchecked, save_native, to_native_string, LoadError};
pub use pglib::{load_pglib, parse_pglib, ConversionReport, PglibError, PglibOptions, ReportEntry};
pub use schedule::{check_schedule, GeneratorSchedule, Schedule, ScheduleError, Violation};

/// One thermal unit in the 3-binary formulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: String,
    pub p_min: f64,
    pub p_max: f64,
    pub min_up: u32,
    pub min_down: u32,
    pub startup_level: f64,
    pub shutdown_level: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub cost_marginal: f64,
    pub cost_no_load: f64,
    pub cost_startup: f64,
    pub init_on: bool,
    pub init_power: f64,
    pub init_periods_in_state: u32,
}

impl Generator {
    /// Number of leading periods whose commitment is forced by the initial
    /// state (on if `init_on`, off otherwise).
    pub fn forced_periods(&self, horizon: usize) -> usize {
        let need = if self.init_on { self.min_up } else { self.min_down };
        (need.saturating_sub(self.init_periods_in_state) as usize).min(horizon)
    }

    pub fn init_u(&self) -> f64 {
        if self.init_on {
            1.0
        } else {
            0.0
        }
    }

    /// Period cost `C_M p + C_NL u + C_F v`.
    pub fn period_cost(&self, p: f64, u: f64, v: f64) -> f64 {
        self.cost_marginal * p + self.cost_no_load * u + self.cost_startup * v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub name: String,
    pub horizon: usize,
    pub voll: f64,
    pub demand: Vec<f64>,
    pub generators: Vec<Generator>,
}

impl Instance {
    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    /// Clamps `min_up`/`min_down` above the horizon down to it, returning a
    /// warning per clamped field.
    pub fn clamp_min_times(&mut self) -> Vec<Diagnostic> {
        let horizon = self.horizon as u32;
        let mut out = Vec::new();
        for g in &mut self.generators {
            if g.min_up > horizon && horizon > 0 {
                out.push(Diagnostic::warning(&g.id, "min_up", format!("{} exceeds horizon {horizon}; clamped", g.min_up)));
                g.min_up = horizon;
            }
            if g.min_down > horizon && horizon > 0 {
                out.push(Diagnostic::warning(
                    &g.id,
                    "min_down",
                    format!("{} exceeds horizon {horizon}; clamped", g.min_down),
                ));
                g.min_down = horizon;
            }
        }
        out
    }

    /// Total cost `F` of a schedule (generation costs plus lost load).
    pub fn schedule_cost(&self, s: &Schedule) -> f64 {
        let mut total = 0.0;
        for (g, gs) in self.generators.iter().zip(&s.generators) {
            for t in 0..self.horizon {
                total += g.period_cost(gs.p[t], gs.u[t], gs.v[t]);
            }
        }
        for t in 0..self.horizon {
            total += self.voll * (self.demand[t] - s.served[t]);
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

/// One finding of [`validate_instance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// `"instance"` or the generator id.
    pub subject: String,
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn error(subject: &str, field: &str, message: impl Into<String>) -> Self {
        Self { severity: Severity::Error, subject: subject.into(), field: field.into(), message: message.into() }
    }

    fn warning(subject: &str, field: &str, message: impl Into<String>) -> Self {
        Self { severity: Severity::Warning, subject: subject.into(), field: field.into(), message: message.into() }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {} {}: {}", self.subject, self.field, self.message)
    }
}

/// Checks every instance and generator invariant.
///
/// Diagnostics come out in a fixed order: instance-level fields first, then
/// each generator in list order with its fields in declaration order.
pub fn validate_instance(inst: &Instance) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let inst_err = |field: &str, msg: String| Diagnostic::error("instance", field, msg);
    if inst.horizon == 0 {
        out.push(inst_err("horizon", "horizon must be at least 1".into()));
    }
    if inst.demand.len() != inst.horizon {
        out.push(inst_err("demand", format!("{} entries for horizon {}", inst.demand.len(), inst.horizon)));
    }
    for (t, &l) in inst.demand.iter().enumerate() {
        if !(l >= 0.0) || !l.is_finite() {
            out.push(inst_err("demand", format!("period {} demand {l} must be finite and ≥ 0", t + 1)));
        }
    }
    if !(inst.voll > 0.0) || !inst.voll.is_finite() {
        out.push(inst_err("voll", format!("{} must be finite and > 0", inst.voll)));
    }
    let mut seen = HashSet::new();
    for g in &inst.generators {
        if !seen.insert(g.id.as_str()) {
            out.push(Diagnostic::error(&g.id, "id", "duplicate generator id"));
        }
    }

    for g in &inst.generators {
        let err = |field: &str, msg: String| Diagnostic::error(&g.id, field, msg);
        let reals = [
            ("p_min", g.p_min),
            ("p_max", g.p_max),
            ("startup_level", g.startup_level),
            ("shutdown_level", g.shutdown_level),
            ("ramp_up", g.ramp_up),
            ("ramp_down", g.ramp_down),
            ("cost_marginal", g.cost_marginal),
            ("cost_no_load", g.cost_no_load),
            ("cost_startup", g.cost_startup),
            ("init_power", g.init_power),
        ];
        let mut finite = true;
        for (field, v) in reals {
            if !v.is_finite() {
                out.push(err(field, format!("{v} is not finite")));
                finite = false;
            }
        }
        if !finite {
            continue;
        }
        if g.p_min < 0.0 {
            out.push(err("p_min", format!("{} must be ≥ 0", g.p_min)));
        }
        if g.p_min > g.p_max {
            out.push(err("p_min/p_max", format!("p_min {} exceeds p_max {}", g.p_min, g.p_max)));
        }
        if g.min_up < 1 {
            out.push(err("min_up", "must be at least 1".into()));
        } else if g.min_up as usize > inst.horizon {
            out.push(Diagnostic::warning(&g.id, "min_up", format!("{} exceeds horizon {}; clamped", g.min_up, inst.horizon)));
        }
        if g.min_down < 1 {
            out.push(err("min_down", "must be at least 1".into()));
        } else if g.min_down as usize > inst.horizon {
            out.push(Diagnostic::warning(
                &g.id,
                "min_down",
                format!("{} exceeds horizon {}; clamped", g.min_down, inst.horizon),
            ));
        }
        if g.startup_level < g.p_min {
            out.push(err("startup_level", format!("{} is below p_min {}", g.startup_level, g.p_min)));
        }
        if g.shutdown_level < g.p_min {
            out.push(err("shutdown_level", format!("{} is below p_min {}", g.shutdown_level, g.p_min)));
        }
        if g.ramp_up < 0.0 {
            out.push(err("ramp_up", format!("{} must be ≥ 0", g.ramp_up)));
        }
        if g.ramp_down < 0.0 {
            out.push(err("ramp_down", format!("{} must be ≥ 0", g.ramp_down)));
        }
        for (field, v) in [("cost_marginal", g.cost_marginal), ("cost_no_load", g.cost_no_load), ("cost_startup", g.cost_startup)] {
            if v < 0.0 {
                out.push(err(field, format!("{v} must be ≥ 0")));
            }
        }
        if g.init_on {
            if g.init_power < g.p_min || g.init_power > g.p_max {
                out.push(err("init_power", format!("{} outside [{}, {}] for an online unit", g.init_power, g.p_min, g.p_max)));
            }
        } else if g.init_power != 0.0 {
            out.push(err("init_power", format!("{} must be 0 for an offline unit", g.init_power)));
        }
        if g.init_periods_in_state < 1 {
            out.push(err("init_periods_in_state", "must be at least 1".into()));
        }
    }
    out
}

/// `true` when no diagnostic is an error.
pub fn is_valid(diags: &[Diagnostic]) -> bool {
    diags.iter().all(|d| !d.is_error())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit() -> Generator {
        Generator {
            id: "g1".into(),
            p_min: 10.0,
            p_max: 50.0,
            min_up: 1,
            min_down: 1,
            startup_level: 50.0,
            shutdown_level: 50.0,
            ramp_up: 50.0,
            ramp_down: 50.0,
            cost_marginal: 20.0,
            cost_no_load: 5.0,
            cost_startup: 100.0,
            init_on: false,
            init_power: 0.0,
            init_periods_in_state: 1,
        }
    }

    fn instance(g: Generator) -> Instance {
        Instance { name: "t".into(), horizon: 2, voll: 3000.0, demand: vec![30.0, 40.0], generators: vec![g] }
    }

    #[test]
    fn well_formed_is_clean() {
        assert!(validate_instance(&instance(unit())).is_empty());
    }

    #[test]
    fn p_min_above_p_max() {
        let mut g = unit();
        g.p_min = 60.0;
        g.startup_level = 60.0;
        g.shutdown_level = 60.0;
        let d = validate_instance(&instance(g));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "p_min/p_max");
    }

    #[test]
    fn startup_level_below_p_min() {
        let mut g = unit();
        g.startup_level = 5.0;
        let d = validate_instance(&instance(g));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "startup_level");
    }

    #[test]
    fn long_min_up_is_a_warning_and_clamps() {
        let mut g = unit();
        g.min_up = 7;
        let mut inst = instance(g);
        let d = validate_instance(&inst);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
        assert!(is_valid(&d));
        let w = inst.clamp_min_times();
        assert_eq!(w.len(), 1);
        assert_eq!(inst.generators[0].min_up, 2);
        assert!(validate_instance(&inst).is_empty());
    }

    #[test]
    fn instance_level_checks_in_order() {
        let mut inst = instance(unit());
        inst.voll = 0.0;
        inst.demand = vec![1.0, -1.0, 2.0];
        inst.generators.push(unit());
        let d = validate_instance(&inst);
        let fields: Vec<&str> = d.iter().map(|d| d.field.as_str()).collect();
        assert_eq!(fields, vec!["demand", "demand", "voll", "id"]);
        assert_eq!(d, validate_instance(&inst));
    }

    #[test]
    fn offline_unit_with_power() {
        let mut g = unit();
        g.init_power = 3.0;
        let d = validate_instance(&instance(g));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "init_power");
    }

    #[test]
    fn forced_periods_from_initial_state() {
        let mut g = unit();
        g.min_down = 3;
        g.init_periods_in_state = 1;
        assert_eq!(g.forced_periods(5), 2);
        g.init_on = true;
        g.init_power = 20.0;
        g.min_up = 4;
        assert_eq!(g.forced_periods(2), 2);
        g.init_periods_in_state = 9;
        assert_eq!(g.forced_periods(5), 0);
    }
}
