//! `chp`: validate, convert, solve, tune, benchmark and reference runs for
//! convex hull pricing.
//!
//! Exit codes: 0 success, 1 usage, 2 validation (invalid instance, infeasible
//! schedule, unsupported input), 3 solver failure, 4 budget exhausted
//! without a result, 5 I/O.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chp_core::bench::ReferenceMode;
use chp_core::methods::MethodId;

#[derive(Parser)]
#[command(name = "chp", version, about = "Convex hull pricing by Lagrangian dual methods")]
struct Cli {
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Commands,
}

/// Options shared by every command that runs a dual method.
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Wall-clock budget per run, in seconds.
    #[arg(long = "budget-s")]
    pub budget_s: Option<f64>,
    /// Stop after this many oracle evaluations.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Measure time in fixed steps per evaluation instead of wall time.
    /// Makes logs and budgets reproducible.
    #[arg(long, value_name = "SECONDS")]
    pub virtual_clock: Option<f64>,
    /// Price box `MIN,MAX`; defaults to `0,VOLL`.
    #[arg(long = "box", value_name = "MIN,MAX", value_parser = parse_box, allow_hyphen_values = true)]
    pub price_box: Option<(f64, f64)>,
    /// Relative MIP gap of the per-generator solves.
    #[arg(long)]
    pub gap_rel: Option<f64>,
    /// Absolute MIP gap of the per-generator solves.
    #[arg(long)]
    pub gap_abs: Option<f64>,
    /// FGM smoothing parameter.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Worker threads for generator solves; defaults to the number of
    /// hardware threads.
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Start from this price in every period instead of the warm start.
    #[arg(long, value_name = "P", allow_hyphen_values = true)]
    pub cold_start: Option<f64>,
}

#[derive(Subcommand)]
enum Commands {
    /// Check a native instance file and print its diagnostics.
    Validate { path: PathBuf },
    /// Convert a pglib-uc file to the native format.
    Convert {
        pglib: PathBuf,
        out: PathBuf,
        #[arg(long, default_value_t = 3000.0)]
        voll: f64,
        /// Instance name; defaults to the file stem.
        #[arg(long)]
        name: Option<String>,
        /// Where to write the conversion report; defaults to
        /// `<out>.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run one method and write prices, the iterate log and a summary.
    Solve {
        instance: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: MethodId,
        /// Hyperparameter override, e.g. `alpha_level=0.3`. Repeatable.
        #[arg(long = "param", value_name = "KEY=VAL")]
        params: Vec<String>,
        /// Reference optimum (JSON) for the relative error in the summary.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Coarse then fine grid search over a method's hyperparameter.
    Tune {
        instance: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: MethodId,
        /// Fixed settings other than the tuned value, as for `solve`.
        #[arg(long = "param", value_name = "KEY=VAL")]
        params: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Per-trial limits.
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run several tuned methods on several instances and write the tables.
    Bench {
        #[arg(required = true)]
        instances: Vec<PathBuf>,
        /// `NAME=VALUE` with the tuned hyperparameter. Repeatable; column
        /// order follows the flags.
        #[arg(long = "method", value_name = "NAME=VALUE", required = true, value_parser = parse_method_value)]
        methods: Vec<(MethodId, f64)>,
        /// Reference optimum files (JSON). Instances without one get a
        /// bundle-mode reference computed first.
        #[arg(long = "reference")]
        references: Vec<PathBuf>,
        #[arg(long, default_value_t = chp_core::bench::DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Checkpoint times in seconds, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [300.0, 900.0])]
        checkpoints: Vec<f64>,
        #[arg(long, default_value_t = 101)]
        curve_points: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compute a reference optimum.
    Reference {
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "bundle")]
        mode: ModeArg,
        /// Absolute bundle gap target.
        #[arg(long, default_value_t = 40.0)]
        gap_abs: f64,
        /// Relative bundle gap target.
        #[arg(long, default_value_t = 1e-9)]
        gap_rel: f64,
        #[arg(long = "budget-s")]
        budget_s: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long = "box", value_name = "MIN,MAX", value_parser = parse_box, allow_hyphen_values = true)]
        price_box: Option<(f64, f64)>,
        /// Output file; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a schedule (JSON) against an instance's constraints.
    Check { instance: PathBuf, schedule: PathBuf },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Bundle,
    BruteForce,
}

impl From<ModeArg> for ReferenceMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Bundle => ReferenceMode::Bundle,
            ModeArg::BruteForce => ReferenceMode::BruteForce,
        }
    }
}

fn parse_method(s: &str) -> Result<MethodId, String> {
    s.parse().map_err(|e: chp_core::methods::MethodError| e.to_string())
}

fn parse_method_value(s: &str) -> Result<(MethodId, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let value: f64 = value.trim().parse().map_err(|_| format!("`{value}` is not a number"))?;
    Ok((parse_method(name.trim())?, value))
}

fn parse_box(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected MIN,MAX, got `{s}`"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("`{lo}` is not a number"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("`{hi}` is not a number"))?;
    if !(lo <= hi) {
        return Err(format!("empty box [{lo}, {hi}]"));
    }
    Ok((lo, hi))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { commands::Code::Usage as u8 } else { 0 });
        }
    };
    let result = commands::check_solver_env().and_then(|()| match cli.command {
        Commands::Validate { path } => commands::validate(&path),
        Commands::Convert { pglib, out, voll, name, report } => commands::convert(&pglib, &out, voll, name, report),
        Commands::Solve { instance, method, params, reference, out, run } => {
            commands::solve(&instance, method, &params, reference.as_deref(), &out, &run, cli.verbose)
        }
        Commands::Tune { instance, method, params, out, run } => commands::tune(&instance, method, &params, &out, &run, cli.verbose),
        Commands::Bench { instances, methods, references, threshold, checkpoints, curve_points, out, run } => {
            let table = commands::BenchTable { methods, threshold, checkpoints, curve_points };
            commands::bench(&instances, &references, table, &out, &run, cli.verbose)
        }
        Commands::Reference { instance, mode, gap_abs, gap_rel, budget_s, max_iter, price_box, out } => {
            let limits = commands::ReferenceLimits { gap_abs, gap_rel, budget_s, max_iter, price_box };
            commands::reference(&instance, mode.into(), limits, out.as_deref())
        }
        Commands::Check { instance, schedule } => commands::check(&instance, &schedule),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code as u8)
        }
    }
}
