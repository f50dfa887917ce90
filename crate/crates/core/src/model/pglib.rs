//! Adapter for the pglib-uc JSON layout.
//!
//! The internal cost model has a constant marginal cost, a no-load cost and
//! a single startup cost, so some data is approximated or dropped. Every
//! such step is recorded in the [`ConversionReport`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{validate_instance, Diagnostic, Generator, Instance};

#[derive(Debug, Error)]
pub enum PglibError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("generator {generator}: {message}")]
    Unsupported { generator: String, message: String },
    #[error("converted instance is invalid:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
}

#[derive(Debug, Clone)]
pub struct PglibOptions {
    pub voll: f64,
    /// Instance name; defaults to the file stem.
    pub name: Option<String>,
}

impl Default for PglibOptions {
    fn default() -> Self {
        Self { voll: 3000.0, name: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    /// `"instance"` or the generator name.
    pub subject: String,
    pub kind: String,
    pub message: String,
}

/// Approximations and dropped data from one conversion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConversionReport {
    pub entries: Vec<ReportEntry>,
}

impl ConversionReport {
    fn push(&mut self, subject: &str, kind: &str, message: String) {
        self.entries.push(ReportEntry { subject: subject.into(), kind: kind.into(), message });
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a ReportEntry> + 'a {
        self.entries.iter().filter(move |e| e.kind == kind)
    }
}

impl fmt::Display for ConversionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{} [{}]: {}", e.subject, e.kind, e.message)?;
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct RawInstance {
    time_periods: usize,
    demand: Vec<f64>,
    #[serde(default)]
    reserves: Vec<f64>,
    thermal_generators: BTreeMap<String, RawThermal>,
    #[serde(default)]
    renewable_generators: BTreeMap<String, Value>,
}

#[derive(Debug, Deserialize)]
struct RawThermal {
    #[serde(default)]
    must_run: i64,
    power_output_minimum: f64,
    power_output_maximum: f64,
    ramp_up_limit: f64,
    ramp_down_limit: f64,
    ramp_startup_limit: f64,
    ramp_shutdown_limit: f64,
    time_up_minimum: i64,
    time_down_minimum: i64,
    power_output_t0: f64,
    unit_on_t0: i64,
    time_up_t0: i64,
    time_down_t0: i64,
    startup: Vec<RawStartup>,
    piecewise_production: Vec<RawPoint>,
}

#[derive(Debug, Deserialize)]
struct RawStartup {
    lag: i64,
    cost: f64,
}

#[derive(Debug, Deserialize)]
struct RawPoint {
    mw: f64,
    cost: f64,
}

const TOP_KEYS: &[&str] = &["time_periods", "demand", "reserves", "thermal_generators", "renewable_generators"];
const GEN_KEYS: &[&str] = &[
    "name",
    "must_run",
    "power_output_minimum",
    "power_output_maximum",
    "ramp_up_limit",
    "ramp_down_limit",
    "ramp_startup_limit",
    "ramp_shutdown_limit",
    "time_up_minimum",
    "time_down_minimum",
    "power_output_t0",
    "unit_on_t0",
    "time_up_t0",
    "time_down_t0",
    "startup",
    "piecewise_production",
];

fn parse_err(e: serde_json::Error) -> PglibError {
    PglibError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
}

pub fn load_pglib(path: impl AsRef<Path>, opts: &PglibOptions) -> Result<(Instance, ConversionReport), PglibError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| PglibError::Io { path: path.display().to_string(), source })?;
    let mut opts = opts.clone();
    if opts.name.is_none() {
        opts.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    parse_pglib(&text, &opts)
}

pub fn parse_pglib(text: &str, opts: &PglibOptions) -> Result<(Instance, ConversionReport), PglibError> {
    let value: Value = serde_json::from_str(text).map_err(parse_err)?;
    let mut report = ConversionReport::default();
    if let Some(obj) = value.as_object() {
        for key in obj.keys().filter(|k| !TOP_KEYS.contains(&k.as_str())) {
            report.push("instance", "ignored field", format!("top-level field `{key}` ignored"));
        }
        if let Some(gens) = obj.get("thermal_generators").and_then(Value::as_object) {
            for (name, g) in gens {
                if let Some(fields) = g.as_object() {
                    for key in fields.keys().filter(|k| !GEN_KEYS.contains(&k.as_str())) {
                        report.push(name, "ignored field", format!("field `{key}` ignored"));
                    }
                }
            }
        }
    }
    let raw: RawInstance = serde_json::from_value(value).map_err(|e| PglibError::Parse { line: 0, column: 0, message: e.to_string() })?;

    let horizon = raw.time_periods;
    if raw.demand.len() != horizon {
        return Err(PglibError::Unsupported {
            generator: "instance".into(),
            message: format!("demand has {} entries for {horizon} periods", raw.demand.len()),
        });
    }
    if raw.reserves.iter().any(|&r| r > 0.0) {
        report.push("instance", "ignored field", "reserve requirements ignored".into());
    }
    if !raw.renewable_generators.is_empty() {
        report.push(
            "instance",
            "dropped units",
            format!("{} renewable generators dropped; demand is not netted", raw.renewable_generators.len()),
        );
    }

    let mut generators = Vec::with_capacity(raw.thermal_generators.len());
    for (name, g) in &raw.thermal_generators {
        generators.push(convert_generator(name, g, &mut report)?);
    }
    let mut inst = Instance {
        name: opts.name.clone().unwrap_or_else(|| "pglib".into()),
        horizon,
        voll: opts.voll,
        demand: raw.demand,
        generators,
    };
    for d in inst.clamp_min_times() {
        report.push(&d.subject, "clamped", format!("{} {}", d.field, d.message));
    }
    let errors: Vec<Diagnostic> = validate_instance(&inst).into_iter().filter(|d| d.is_error()).collect();
    if !errors.is_empty() {
        return Err(PglibError::Invalid(errors));
    }
    Ok((inst, report))
}

fn nonneg_periods(name: &str, field: &str, v: i64) -> Result<u32, PglibError> {
    u32::try_from(v).map_err(|_| PglibError::Unsupported { generator: name.into(), message: format!("{field} = {v} is negative") })
}

fn convert_generator(name: &str, g: &RawThermal, report: &mut ConversionReport) -> Result<Generator, PglibError> {
    let unsupported = |message: String| PglibError::Unsupported { generator: name.into(), message };
    let (p_min, p_max) = (g.power_output_minimum, g.power_output_maximum);

    let curve = &g.piecewise_production;
    if curve.is_empty() {
        return Err(unsupported("empty piecewise_production".into()));
    }
    if curve.windows(2).any(|w| !(w[1].mw > w[0].mw)) {
        return Err(unsupported("piecewise_production breakpoints are not strictly increasing".into()));
    }
    let (first, last) = (&curve[0], &curve[curve.len() - 1]);
    if (first.mw - p_min).abs() > 1e-6 * (1.0 + p_min.abs()) || (last.mw - p_max).abs() > 1e-6 * (1.0 + p_max.abs()) {
        report.push(
            name,
            "cost linearization",
            format!("cost curve spans [{}, {}] but limits are [{p_min}, {p_max}]; endpoints of the curve used", first.mw, last.mw),
        );
    }
    let cost_marginal = if curve.len() == 1 { 0.0 } else { (last.cost - first.cost) / (last.mw - first.mw) };
    let cost_no_load = first.cost - cost_marginal * first.mw;
    if curve.len() > 2 {
        report.push(
            name,
            "cost linearization",
            format!(
                "{}-piece cost curve replaced by average slope {cost_marginal} and no-load cost {cost_no_load}",
                curve.len() - 1
            ),
        );
    }

    let cost_startup = match g.startup.iter().max_by_key(|s| s.lag) {
        Some(s) => {
            if g.startup.len() > 1 {
                report.push(
                    name,
                    "startup categories",
                    format!("{} startup categories; coldest (lag {}) cost {} used", g.startup.len(), s.lag, s.cost),
                );
            }
            s.cost
        }
        None => {
            report.push(name, "startup categories", "no startup cost given; 0 used".into());
            0.0
        }
    };

    if g.must_run != 0 {
        report.push(name, "ignored field", "must_run flag ignored".into());
    }

    let mut startup_level = g.ramp_startup_limit;
    if startup_level < p_min {
        report.push(name, "clamped", format!("ramp_startup_limit {startup_level} raised to p_min {p_min}"));
        startup_level = p_min;
    }
    let mut shutdown_level = g.ramp_shutdown_limit;
    if shutdown_level < p_min {
        report.push(name, "clamped", format!("ramp_shutdown_limit {shutdown_level} raised to p_min {p_min}"));
        shutdown_level = p_min;
    }

    let min_up = nonneg_periods(name, "time_up_minimum", g.time_up_minimum)?.max(1);
    let min_down = nonneg_periods(name, "time_down_minimum", g.time_down_minimum)?.max(1);
    let init_on = g.unit_on_t0 != 0;
    let mut init_power = g.power_output_t0;
    let since = if init_on { g.time_up_t0 } else { g.time_down_t0 };
    let mut init_periods_in_state = nonneg_periods(name, if init_on { "time_up_t0" } else { "time_down_t0" }, since)?;
    if init_periods_in_state == 0 {
        report.push(name, "clamped", "time in initial state 0 raised to 1".into());
        init_periods_in_state = 1;
    }
    if init_on && !(p_min..=p_max).contains(&init_power) {
        let c = init_power.clamp(p_min, p_max);
        report.push(name, "clamped", format!("power_output_t0 {init_power} clamped to {c}"));
        init_power = c;
    } else if !init_on && init_power != 0.0 {
        report.push(name, "clamped", format!("power_output_t0 {init_power} of an offline unit set to 0"));
        init_power = 0.0;
    }

    Ok(Generator {
        id: name.into(),
        p_min,
        p_max,
        min_up,
        min_down,
        startup_level,
        shutdown_level,
        ramp_up: g.ramp_up_limit,
        ramp_down: g.ramp_down_limit,
        cost_marginal,
        cost_no_load,
        cost_startup,
        init_on,
        init_power,
        init_periods_in_state,
    })
}
