use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::methods::{write_log_csv, LogRow, MethodConfig, MethodId, StoppingCriterion, Termination, DEFAULT_SIGMA};
use crate::model::Instance;
use crate::oracle::{OracleOptions, PriceBox};

use super::{
    aggregate_curves, gap_curve, geometric_mean, relative_error, row_error, run_on_instance, time_to_threshold, BenchError,
    ReferenceOptimum, RelativeError, StartPoint, ThresholdTime,
};

/// Threshold used for time-to-threshold tables.
pub const DEFAULT_THRESHOLD: f64 = 5e-6;
pub const DEFAULT_BUDGET: Duration = Duration::from_secs(900);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Methods with their tuned hyperparameters, in column order.
    pub methods: Vec<(MethodId, f64)>,
    pub stop: StoppingCriterion,
    /// Times (seconds) at which best-so-far errors are reported.
    pub checkpoints: Vec<f64>,
    pub threshold: f64,
    pub curve_points: usize,
    /// Defaults to `[0, C_VOLL]` per instance.
    pub price_box: Option<PriceBox>,
    pub sigma: f64,
    pub oracle: OracleOptions,
    pub start: StartPoint,
}

impl BenchConfig {
    pub fn new(methods: Vec<(MethodId, f64)>) -> Self {
        Self {
            methods,
            stop: StoppingCriterion::budget(DEFAULT_BUDGET),
            checkpoints: vec![300.0, DEFAULT_BUDGET.as_secs_f64()],
            threshold: DEFAULT_THRESHOLD,
            curve_points: 101,
            price_box: None,
            sigma: DEFAULT_SIGMA,
            oracle: OracleOptions::default(),
            start: StartPoint::WarmStart,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointError {
    pub time: f64,
    /// Best-so-far relative error at that time; `None` before the first
    /// logged iterate.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub instance: String,
    pub method: MethodId,
    pub param: f64,
    /// Error of the returned point, unclamped.
    pub final_error: RelativeError,
    pub checkpoints: Vec<CheckpointError>,
    pub threshold_time: ThresholdTime,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricMean {
    /// Over the runs that reached the threshold.
    pub value: Option<f64>,
    /// Runs excluded because they never reached it.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCurve {
    pub method: MethodId,
    /// `(t, mean of L* − L_best)`.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub instances: Vec<String>,
    pub methods: Vec<MethodId>,
    pub threshold: f64,
    pub checkpoints: Vec<f64>,
    /// Row-major: instance, then method.
    pub cells: Vec<ReportCell>,
    /// Aligned with `methods`.
    pub geometric_means: Vec<GeometricMean>,
    pub curves: Vec<MethodCurve>,
    #[serde(skip)]
    pub logs: Vec<Vec<LogRow>>,
}

fn checkpoint_error(log: &[LogRow], l_star: f64, time: f64) -> Option<f64> {
    let idx = log.partition_point(|r| r.t <= time);
    (idx > 0).then(|| row_error(&log[idx - 1], l_star))
}

/// Runs every configured method on every instance and assembles the
/// tables. Each instance needs a reference optimum with the same name.
pub fn run_benchmark(instances: &[Instance], references: &[ReferenceOptimum], config: &BenchConfig) -> Result<BenchmarkReport, BenchError> {
    let mut cells = Vec::new();
    let mut logs = Vec::new();
    let mut curves_in: Vec<Vec<Vec<(f64, f64)>>> = vec![Vec::new(); config.methods.len()];
    for inst in instances {
        let reference =
            references.iter().find(|r| r.instance == inst.name).ok_or_else(|| BenchError::MissingReference(inst.name.clone()))?;
        let q = config.price_box.unwrap_or_else(|| PriceBox::for_instance(inst));
        for (m, &(method, param)) in config.methods.iter().enumerate() {
            let mut mc = MethodConfig::new(method, param, q, config.stop.clone());
            mc.sigma = config.sigma;
            let run = run_on_instance(inst, &mc, config.start, config.oracle)?;
            let l_star = reference.l_star;
            cells.push(ReportCell {
                instance: inst.name.clone(),
                method,
                param,
                final_error: relative_error(l_star, -run.returned_value),
                checkpoints: config.checkpoints.iter().map(|&time| CheckpointError { time, error: checkpoint_error(&run.log, l_star, time) }).collect(),
                threshold_time: time_to_threshold(&run.log, l_star, config.threshold),
                iterations: run.log.len(),
                termination: run.termination.clone(),
            });
            curves_in[m].push(gap_curve(&run.log, l_star));
            logs.push(run.log);
        }
    }
    let n_methods = config.methods.len();
    let geometric_means = (0..n_methods)
        .map(|m| {
            let times: Vec<ThresholdTime> = cells.iter().skip(m).step_by(n_methods).map(|c| c.threshold_time).collect();
            geometric_mean(&times)
        })
        .collect();
    let curves = config
        .methods
        .iter()
        .zip(&curves_in)
        .map(|(&(method, _), c)| MethodCurve { method, points: aggregate_curves(c, config.curve_points) })
        .collect();
    Ok(BenchmarkReport {
        instances: instances.iter().map(|i| i.name.clone()).collect(),
        methods: config.methods.iter().map(|m| m.0).collect(),
        threshold: config.threshold,
        checkpoints: config.checkpoints.clone(),
        cells,
        geometric_means,
        curves,
        logs,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.display().to_string(), source }
}

fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

impl BenchmarkReport {
    pub fn cell(&self, instance: usize, method: usize) -> &ReportCell {
        &self.cells[instance * self.methods.len() + method]
    }

    fn table<F: Fn(&ReportCell) -> String>(&self, path: &Path, value: F, footer: Vec<Vec<String>>) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["instance".to_string()];
        header.extend(self.methods.iter().map(|m| m.name().to_string()));
        w.write_record(&header)?;
        for (i, name) in self.instances.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend((0..self.methods.len()).map(|m| value(self.cell(i, m))));
            w.write_record(&row)?;
        }
        for row in footer {
            w.write_record(&row)?;
        }
        w.flush().map_err(io_err(path))?;
        Ok(())
    }

    /// Writes the CSV tables, the mean curves, every run log and a JSON
    /// mirror into `dir`. Tables clamp negative errors to 0; the JSON keeps
    /// raw values.
    pub fn write(&self, dir: &Path) -> Result<(), BenchError> {
        fs::create_dir_all(dir.join("logs")).map_err(io_err(dir))?;
        self.table(&dir.join("final_error.csv"), |c| sci(c.final_error.clamped()), Vec::new())?;
        for (k, &t) in self.checkpoints.iter().enumerate() {
            let path = dir.join(format!("error_at_{t}s.csv"));
            self.table(&path, |c| c.checkpoints[k].error.map_or(String::new(), |e| sci(e.max(0.0))), Vec::new())?;
        }
        let mut geo = vec!["geomean".to_string()];
        let mut fails = vec!["failures".to_string()];
        for g in &self.geometric_means {
            geo.push(g.value.map_or("X".into(), sci));
            fails.push(g.failures.to_string());
        }
        let ttt = |c: &ReportCell| match c.threshold_time {
            ThresholdTime::Reached(t) => sci(t),
            ThresholdTime::Fail => "X".into(),
        };
        self.table(&dir.join("time_to_threshold.csv"), ttt, vec![geo, fails])?;
        for curve in &self.curves {
            let path = dir.join(format!("curve_{}.csv", curve.method.name()));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["t", "mean_gap"])?;
            for &(t, g) in &curve.points {
                w.write_record([format!("{t:.16e}"), format!("{g:.16e}")])?;
            }
            w.flush().map_err(io_err(&path))?;
        }
        for (cell, log) in self.cells.iter().zip(&self.logs) {
            let path = dir.join("logs").join(format!("{}__{}.csv", cell.instance, cell.method.name()));
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            write_log_csv(log, file).map_err(|e| BenchError::Reference(e.to_string()))?;
        }
        let path = dir.join("report.json");
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(io_err(&path))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{compute_reference, ReferenceMode, ReferenceOptions};
    use crate::methods::{read_log_csv, Clock};
    use crate::model::tiny_corpus;

    fn config() -> BenchConfig {
        let mut c = BenchConfig::new(vec![(MethodId::SubgEp, 10.0), (MethodId::Bplm, 0.5)]);
        c.stop = StoppingCriterion::iterations(40);
        c.stop.clock = Clock::Virtual { seconds_per_iteration: 0.5 };
        c.checkpoints = vec![5.0, 20.0];
        c.threshold = 1e-5;
        c.curve_points = 11;
        c.oracle = OracleOptions::exact();
        c
    }

    #[test]
    fn report_shape_and_recomputed_thresholds() {
        let inst = tiny_corpus().remove(0);
        let r = compute_reference(&inst, ReferenceMode::BruteForce, &ReferenceOptions::default()).unwrap();
        let report = run_benchmark(std::slice::from_ref(&inst), &[r.clone()], &config()).unwrap();
        assert_eq!(report.methods.len(), 2);
        assert_eq!(report.cells.len(), 2);
        let dir = tempfile::tempdir().unwrap();
        report.write(dir.path()).unwrap();
        let header = fs::read_to_string(dir.path().join("final_error.csv")).unwrap();
        assert!(header.starts_with("instance,SUBG-EP,BPLM\n"));
        for cell in &report.cells {
            let path = dir.path().join("logs").join(format!("{}__{}.csv", cell.instance, cell.method.name()));
            let log = read_log_csv(fs::File::open(path).unwrap()).unwrap();
            assert_eq!(time_to_threshold(&log, r.l_star, report.threshold), cell.threshold_time);
        }
        // Virtual time makes reruns identical.
        let again = run_benchmark(std::slice::from_ref(&inst), &[r], &config()).unwrap();
        assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&report).unwrap());
    }

    #[test]
    fn missing_reference() {
        let inst = tiny_corpus().remove(0);
        assert!(matches!(run_benchmark(&[inst], &[], &config()), Err(BenchError::MissingReference(_))));
    }
}
