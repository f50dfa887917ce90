use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use chp_core::bench::{
    compute_reference, relative_error, run_benchmark, tune as tune_grid, BenchConfig, BenchError, ReferenceMode, ReferenceOptimum,
    ReferenceOptions, RelativeError, StartPoint, TuningGrid, DEFAULT_BUDGET,
};
use chp_core::methods::{
    run_method, write_log_csv, Clock, FirstOrderOracle, InstanceOracle, LogRow, MethodConfig, MethodError, MethodId, Returned,
    RunResult, StoppingCriterion, Termination,
};
use chp_core::model::{
    check_schedule, load_native, load_pglib, parse_native_unchecked, save_native, validate_instance, Instance, LoadError, PglibError,
    PglibOptions, Schedule,
};
use chp_core::oracle::{warm_start, OracleError, OracleOptions, PriceBox};

use crate::RunArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    Usage = 1,
    Validation = 2,
    Solver = 3,
    Budget = 4,
    Io = 5,
}

#[derive(Debug)]
pub struct Failure {
    pub code: Code,
    pub error: anyhow::Error,
}

pub type CmdResult = Result<(), Failure>;

fn fail(code: Code, error: impl Into<anyhow::Error>) -> Failure {
    Failure { code, error: error.into() }
}

trait Tag<T> {
    fn tag(self, code: Code) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for Result<T, E> {
    fn tag(self, code: Code) -> Result<T, Failure> {
        self.map_err(|e| fail(code, e))
    }
}

/// Only the built-in solver exists; any other adapter name is refused.
pub fn check_solver_env() -> CmdResult {
    match std::env::var("CHP_SOLVER") {
        Ok(v) if !v.is_empty() && v != "builtin" => {
            Err(fail(Code::Usage, anyhow!("CHP_SOLVER={v}: no external solver adapter is built (only `builtin`)")))
        }
        _ => Ok(()),
    }
}

fn load_error_code(e: &LoadError) -> Code {
    match e {
        LoadError::Io { .. } => Code::Io,
        _ => Code::Validation,
    }
}

fn load(path: &Path) -> Result<Instance, Failure> {
    load_native(path).map_err(|e| fail(load_error_code(&e), e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CmdResult {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display())).tag(Code::Io)
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).tag(Code::Io)
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).tag(Code::Io)?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display())).tag(Code::Validation)
}

fn oracle_code(e: &OracleError) -> Code {
    match e {
        OracleError::Dimension { .. } | OracleError::Sigma(_) => Code::Usage,
        OracleError::SizeGuard(_) => Code::Validation,
        _ => Code::Solver,
    }
}

fn bench_code(e: &BenchError) -> Code {
    match e {
        BenchError::Method(_) | BenchError::Grid(_) | BenchError::MissingReference(_) => Code::Usage,
        BenchError::Oracle(o) => oracle_code(o),
        BenchError::Io { .. } => Code::Io,
        BenchError::Csv(e) if e.is_io_error() => Code::Io,
        _ => Code::Solver,
    }
}

fn bench_fail(e: BenchError) -> Failure {
    fail(bench_code(&e), e)
}

pub fn validate(path: &Path) -> CmdResult {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).tag(Code::Io)?;
    let inst = parse_native_unchecked(&text).tag(Code::Validation)?;
    let diags = validate_instance(&inst);
    for d in &diags {
        println!("{d}");
    }
    if diags.is_empty() {
        println!("{}: ok ({} generators, {} periods)", inst.name, inst.generators.len(), inst.horizon);
        Ok(())
    } else {
        Err(fail(Code::Validation, anyhow!("{}: {} diagnostic(s)", path.display(), diags.len())))
    }
}

pub fn convert(pglib: &Path, out: &Path, voll: f64, name: Option<String>, report: Option<PathBuf>) -> CmdResult {
    let opts = PglibOptions { voll, name };
    let (inst, rep) = load_pglib(pglib, &opts).map_err(|e| {
        let code = if matches!(e, PglibError::Io { .. }) { Code::Io } else { Code::Validation };
        fail(code, e)
    })?;
    save_native(&inst, out).with_context(|| format!("cannot write {}", out.display())).tag(Code::Io)?;
    let report_path = report.unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".report.json");
        PathBuf::from(p)
    });
    write(&report_path, to_json(&rep))?;
    print!("{rep}");
    println!("wrote {} ({} report entries)", out.display(), rep.entries.len());
    Ok(())
}

/// Run settings resolved from [`RunArgs`].
struct Resolved {
    stop: StoppingCriterion,
    price_box: Option<PriceBox>,
    sigma: Option<f64>,
    oracle: OracleOptions,
    start: StartPoint,
}

fn resolve(run: &RunArgs) -> Result<Resolved, Failure> {
    let usage = |msg: String| Err(fail(Code::Usage, anyhow!(msg)));
    let budget = match run.budget_s {
        Some(b) if !(b >= 0.0) || !b.is_finite() => return usage(format!("--budget-s must be a finite non-negative number, got {b}")),
        Some(b) => Some(Duration::from_secs_f64(b)),
        None if run.max_iter.is_none() => Some(DEFAULT_BUDGET),
        None => None,
    };
    let mut stop = StoppingCriterion { budget, max_iterations: run.max_iter, ..StoppingCriterion::budget(DEFAULT_BUDGET) };
    if let Some(s) = run.virtual_clock {
        if !(s > 0.0) {
            return usage(format!("--virtual-clock must be positive, got {s}"));
        }
        stop.clock = Clock::Virtual { seconds_per_iteration: s };
    }
    let mut oracle = OracleOptions::default();
    if let Some(g) = run.gap_rel {
        oracle.gap_rel = g;
    }
    if let Some(g) = run.gap_abs {
        oracle.gap_abs = g;
    }
    if !(oracle.gap_rel >= 0.0 && oracle.gap_abs >= 0.0) {
        return usage("MIP gaps must be non-negative".into());
    }
    let threads = run.parallel.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return usage("--parallel must be at least 1".into());
    }
    // The global pool can only be built once per process; a second build
    // fails harmlessly.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    oracle.parallel = threads > 1;
    Ok(Resolved {
        stop,
        price_box: run.price_box.map(|(lo, hi)| PriceBox::new(lo, hi)),
        sigma: run.sigma,
        oracle,
        start: run.cold_start.map_or(StartPoint::WarmStart, StartPoint::Flat),
    })
}

/// Hyperparameter used when `--param` does not set one.
fn default_param(method: MethodId) -> f64 {
    match method {
        MethodId::Blm | MethodId::Bplm => 0.5,
        _ => 1.0,
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool, Failure> {
    v.parse().map_err(|_| fail(Code::Usage, anyhow!("{key}: expected true or false, got `{v}`")))
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, Failure> {
    v.parse().map_err(|_| fail(Code::Usage, anyhow!("{key}: cannot parse `{v}`")))
}

/// Applies `KEY=VAL` overrides. Returns whether the tuned hyperparameter
/// was set.
fn apply_params(config: &mut MethodConfig, params: &[String]) -> Result<bool, Failure> {
    let mut tuned = false;
    for p in params {
        let (key, v) = p.split_once('=').ok_or_else(|| fail(Code::Usage, anyhow!("--param expects KEY=VAL, got `{p}`")))?;
        let (key, v) = (key.trim(), v.trim());
        match key {
            k if k == config.method.param_name() || k == "param" => {
                config.param = parse_num(k, v)?;
                tuned = true;
            }
            "exact_polyak" => config.exact_polyak = Some(parse_num(key, v)?),
            "da_anchor_first" => config.da_anchor_first = parse_bool(key, v)?,
            "fgm_eval_every" => config.fgm_eval_every = parse_bool(key, v)?,
            "prune_bundle" => config.prune_bundle = parse_bool(key, v)?,
            "subg_l_steps" => config.subg_l_steps = Some(parse_num(key, v)?),
            _ => {
                return Err(fail(
                    Code::Usage,
                    anyhow!("{}: unknown parameter `{key}` (the tuned one is `{}`)", config.method, config.method.param_name()),
                ))
            }
        }
    }
    Ok(tuned)
}

fn method_config(method: MethodId, params: &[String], inst: &Instance, r: &Resolved) -> Result<(MethodConfig, bool), Failure> {
    let q = r.price_box.unwrap_or_else(|| PriceBox::for_instance(inst));
    let mut config = MethodConfig::new(method, default_param(method), q, r.stop);
    if let Some(s) = r.sigma {
        config.sigma = s;
    }
    let tuned = apply_params(&mut config, params)?;
    method.validate_param(config.param).tag(Code::Usage)?;
    if method == MethodId::Fgm && !(config.sigma > 0.0) {
        return Err(fail(Code::Usage, MethodError::Sigma(config.sigma)));
    }
    Ok((config, tuned))
}

/// Starting prices and the oracle, smoothed around the relaxation for FGM.
fn prepare<'a>(inst: &'a Instance, method: MethodId, r: &Resolved) -> Result<(InstanceOracle<'a>, Vec<f64>), Failure> {
    let ws = match (r.start, method) {
        (StartPoint::WarmStart, _) | (_, MethodId::Fgm) => Some(warm_start(inst).context("warm start").tag(Code::Solver)?),
        _ => None,
    };
    let pi1 = match r.start {
        StartPoint::WarmStart => ws.as_ref().unwrap().prices.clone(),
        StartPoint::Flat(p) => vec![p; inst.horizon],
    };
    let mut oracle = InstanceOracle::new(inst, r.oracle);
    if let Some(ws) = ws {
        oracle = oracle.with_reference(ws.reference);
    }
    Ok((oracle, pi1))
}

/// The start point as the answer, evaluated once.
fn start_only(oracle: &InstanceOracle, method: MethodId, pi1: &[f64]) -> Result<RunResult, Failure> {
    let clock = Instant::now();
    let e = oracle.evaluate(pi1).map_err(|e| fail(oracle_code(&e), e))?;
    let row = LogRow { k: 1, t: 0.0, value: e.value, best: e.value, step: None, extra: [None; 3] };
    Ok(RunResult {
        method,
        log: vec![row],
        iterates: vec![pi1.to_vec()],
        best_point: pi1.to_vec(),
        best_value: e.value,
        last_point: pi1.to_vec(),
        last_value: e.value,
        average_point: None,
        average_value: None,
        returned_point: pi1.to_vec(),
        returned_value: e.value,
        returned: Returned::Best,
        termination: Termination::Budget,
        oracle_calls: 1,
        wall_time: clock.elapsed(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub instance: String,
    pub method: MethodId,
    pub param: f64,
    pub sigma: f64,
    pub price_box: PriceBox,
    pub start: StartPoint,
    pub termination: Termination,
    pub returned: Option<Returned>,
    /// `L` at the returned prices.
    pub final_l: Option<f64>,
    pub best_l: Option<f64>,
    pub iterations: usize,
    pub oracle_calls: usize,
    pub wall_time_s: f64,
    pub reference_l_star: Option<f64>,
    pub relative_error: Option<RelativeError>,
}

fn write_prices(dir: &Path, prices: &[f64]) -> CmdResult {
    let mut csv = String::from("t,price\n");
    for (t, p) in prices.iter().enumerate() {
        csv.push_str(&format!("{},{p:.16e}\n", t + 1));
    }
    write(&dir.join("prices.csv"), csv)?;
    write(&dir.join("prices.json"), to_json(&prices))
}

fn write_log(path: &Path, log: &[LogRow]) -> CmdResult {
    let file = fs::File::create(path).with_context(|| format!("cannot write {}", path.display())).tag(Code::Io)?;
    write_log_csv(log, file).with_context(|| format!("cannot write {}", path.display())).tag(Code::Io)
}

pub fn solve(
    path: &Path,
    method: MethodId,
    params: &[String],
    reference: Option<&Path>,
    out: &Path,
    run: &RunArgs,
    verbose: bool,
) -> CmdResult {
    let inst = load(path)?;
    let r = resolve(run)?;
    let (config, _) = method_config(method, params, &inst, &r)?;
    let reference: Option<ReferenceOptimum> = reference.map(read_json).transpose()?;
    let (oracle, pi1) = prepare(&inst, method, &r)?;
    if verbose {
        eprintln!("{}: {} with {} = {}", inst.name, method, method.param_name(), config.param);
    }
    let result = if r.stop.budget.is_some_and(|b| b.is_zero()) {
        start_only(&oracle, method, &pi1)?
    } else {
        run_method(&oracle, &config, &pi1).tag(Code::Usage)?
    };
    create_dir(out)?;
    write_log(&out.join("log.csv"), &result.log)?;
    let has_result = !result.log.is_empty();
    if has_result {
        write_prices(out, &result.returned_point)?;
    }
    let l_star = reference.as_ref().map(|r| r.l_star);
    let summary = SolveSummary {
        instance: inst.name.clone(),
        method,
        param: config.param,
        sigma: config.sigma,
        price_box: config.price_box,
        start: r.start,
        termination: result.termination.clone(),
        returned: has_result.then_some(result.returned),
        final_l: has_result.then(|| result.returned_l()),
        best_l: has_result.then(|| -result.best_value),
        iterations: result.log.len(),
        oracle_calls: result.oracle_calls,
        wall_time_s: result.wall_time.as_secs_f64(),
        reference_l_star: l_star,
        relative_error: l_star.filter(|_| has_result).map(|ls| relative_error(ls, result.returned_l())),
    };
    write(&out.join("summary.json"), to_json(&summary))?;
    if let Termination::Failed(msg) = &result.termination {
        return Err(fail(Code::Solver, anyhow!("{method} failed after {} iterations: {msg}", result.log.len())));
    }
    if !has_result {
        return Err(fail(Code::Budget, anyhow!("budget exhausted before the first evaluation")));
    }
    println!(
        "{} {}: L = {:.10e} ({:?}, {} iterations, {:?})",
        inst.name,
        method,
        result.returned_l(),
        result.returned,
        result.log.len(),
        result.termination
    );
    if let Some(e) = summary.relative_error {
        println!("relative error {:.3e}", e.value);
    }
    Ok(())
}

pub fn tune(path: &Path, method: MethodId, params: &[String], out: &Path, run: &RunArgs, verbose: bool) -> CmdResult {
    let inst = load(path)?;
    let r = resolve(run)?;
    let (config, tuned) = method_config(method, params, &inst, &r)?;
    if tuned {
        return Err(fail(Code::Usage, anyhow!("`{}` is the tuned hyperparameter and cannot be fixed", method.param_name())));
    }
    if r.stop.budget.is_some_and(|b| b.is_zero()) {
        return Err(fail(Code::Usage, anyhow!("tuning needs a positive per-trial budget")));
    }
    let (oracle, pi1) = prepare(&inst, method, &r)?;
    let grid = TuningGrid::for_method(method, r.stop);
    if verbose {
        eprintln!("{}: tuning {} over {} coarse values", inst.name, method, grid.coarse.len());
    }
    let outcome = tune_grid(&oracle, &config, &pi1, &grid).map_err(bench_fail)?;
    create_dir(out)?;
    write(&out.join("tuning.json"), to_json(&outcome))?;
    let mut csv = String::from("stage,param,final_value,iterations,termination,error\n");
    for t in &outcome.trials {
        let stage = format!("{:?}", t.stage).to_lowercase();
        let value = t.final_value.map_or(String::new(), |v| format!("{v:.16e}"));
        let term = t.termination.as_ref().map_or(String::new(), |t| format!("{t:?}"));
        let err = t.error.as_deref().unwrap_or("").replace(['"', ','], " ");
        csv.push_str(&format!("{stage},{:.16e},{value},{},\"{term}\",\"{err}\"\n", t.param, t.iterations));
    }
    write(&out.join("tuning.csv"), csv)?;
    println!("{} {}: best {} = {} (L = {:.10e})", inst.name, method, method.param_name(), outcome.best, -outcome.best_value);
    Ok(())
}

pub struct BenchTable {
    pub methods: Vec<(MethodId, f64)>,
    pub threshold: f64,
    pub checkpoints: Vec<f64>,
    pub curve_points: usize,
}

pub fn bench(paths: &[PathBuf], reference_paths: &[PathBuf], table: BenchTable, out: &Path, run: &RunArgs, verbose: bool) -> CmdResult {
    let instances = paths.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
    let r = resolve(run)?;
    for &(m, v) in &table.methods {
        m.validate_param(v).tag(Code::Usage)?;
    }
    if table.curve_points < 2 {
        return Err(fail(Code::Usage, anyhow!("--curve-points must be at least 2")));
    }
    let mut references: Vec<ReferenceOptimum> = reference_paths.iter().map(|p| read_json(p)).collect::<Result<_, _>>()?;
    create_dir(out)?;
    for inst in &instances {
        if references.iter().any(|x| x.instance == inst.name) {
            continue;
        }
        if verbose {
            eprintln!("{}: computing bundle reference", inst.name);
        }
        let opts = ReferenceOptions { price_box: r.price_box, ..ReferenceOptions::default() };
        let reference = compute_reference(inst, ReferenceMode::Bundle, &opts).map_err(bench_fail)?;
        create_dir(&out.join("references"))?;
        write(&out.join("references").join(format!("{}.json", inst.name)), to_json(&reference))?;
        references.push(reference);
    }
    let mut config = BenchConfig::new(table.methods);
    config.stop = r.stop;
    config.checkpoints = table.checkpoints;
    config.threshold = table.threshold;
    config.curve_points = table.curve_points;
    config.price_box = r.price_box;
    if let Some(s) = r.sigma {
        config.sigma = s;
    }
    config.oracle = r.oracle;
    config.start = r.start;
    if verbose {
        eprintln!("running {} methods on {} instances", config.methods.len(), instances.len());
    }
    let report = run_benchmark(&instances, &references, &config).map_err(bench_fail)?;
    report.write(out).map_err(bench_fail)?;
    for (m, g) in report.methods.iter().zip(&report.geometric_means) {
        let mean = g.value.map_or("X".to_string(), |v| format!("{v:.3e} s"));
        println!("{m}: time to {:.0e} geomean {mean}, {} failure(s)", report.threshold, g.failures);
    }
    Ok(())
}

pub struct ReferenceLimits {
    pub gap_abs: f64,
    pub gap_rel: f64,
    pub budget_s: Option<f64>,
    pub max_iter: Option<usize>,
    pub price_box: Option<(f64, f64)>,
}

pub fn reference(path: &Path, mode: ReferenceMode, limits: ReferenceLimits, out: Option<&Path>) -> CmdResult {
    let inst = load(path)?;
    if !(limits.gap_abs >= 0.0 && limits.gap_rel >= 0.0) {
        return Err(fail(Code::Usage, anyhow!("gap targets must be non-negative")));
    }
    let budget = match limits.budget_s {
        Some(b) if !(b > 0.0) || !b.is_finite() => return Err(fail(Code::Usage, anyhow!("--budget-s must be positive, got {b}"))),
        b => b.map(Duration::from_secs_f64),
    };
    let opts = ReferenceOptions {
        gap_abs: limits.gap_abs,
        gap_rel: limits.gap_rel,
        budget,
        max_iterations: limits.max_iter,
        price_box: limits.price_box.map(|(lo, hi)| PriceBox::new(lo, hi)),
    };
    let reference = compute_reference(&inst, mode, &opts).map_err(bench_fail)?;
    let json = to_json(&reference);
    match out {
        Some(p) => {
            write(p, &json)?;
            println!("{}: L* = {:.10e}, gap {:.3e}{}", inst.name, reference.l_star, reference.gap, if reference.is_final { "" } else { " (not final)" });
        }
        None => print!("{json}"),
    }
    Ok(())
}

pub fn check(instance: &Path, schedule: &Path) -> CmdResult {
    let inst = load(instance)?;
    let s: Schedule = read_json(schedule)?;
    let violations = check_schedule(&inst, &s).tag(Code::Validation)?;
    for v in &violations {
        println!("{v}");
    }
    if violations.is_empty() {
        println!("feasible, cost {:.10e}", inst.schedule_cost(&s));
        Ok(())
    } else {
        Err(fail(Code::Validation, anyhow!("{} violation(s)", violations.len())))
    }
}
