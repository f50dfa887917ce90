use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chp_core::bench::{time_to_threshold, ReferenceOptimum};
use chp_core::methods::read_log_csv;
use chp_core::model::{load_native, save_native, tiny_corpus, GeneratorSchedule, Schedule};

fn chp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chp")).args(args).env_remove("CHP_SOLVER").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.json");
    save_native(&tiny_corpus().remove(0), &path).unwrap();
    path
}

const PGLIB: &str = r#"{
  "time_periods": 3,
  "demand": [100.0, 120.0, 90.0],
  "reserves": [0.0, 0.0, 0.0],
  "thermal_generators": {
    "a": {
      "must_run": 0,
      "power_output_minimum": 20.0, "power_output_maximum": 80.0,
      "ramp_up_limit": 40.0, "ramp_down_limit": 40.0,
      "ramp_startup_limit": 30.0, "ramp_shutdown_limit": 30.0,
      "time_up_minimum": 2, "time_down_minimum": 1,
      "power_output_t0": 50.0, "unit_on_t0": 1, "time_up_t0": 4, "time_down_t0": 0,
      "startup": [{"lag": 1, "cost": 500.0}],
      "piecewise_production": [{"mw": 20.0, "cost": 700.0}, {"mw": 80.0, "cost": 1900.0}],
      "name": "a"
    }
  },
  "renewable_generators": {}
}"#;

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = tiny(dir.path());
    assert_eq!(code(&chp(&["validate", s(&ok)])), 0);

    let bad = dir.path().join("bad.json");
    let text = fs::read_to_string(&ok).unwrap().replacen("\"voll\": ", "\"voll\": -", 1);
    fs::write(&bad, text).unwrap();
    let out = chp(&["validate", s(&bad)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("voll"));

    assert_eq!(code(&chp(&["validate", s(&dir.path().join("missing.json"))])), 5);
}

#[test]
fn convert_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("case.json");
    fs::write(&src, PGLIB).unwrap();
    let out = dir.path().join("native.json");
    assert_eq!(code(&chp(&["convert", s(&src), s(&out)])), 0);
    assert_eq!(code(&chp(&["validate", s(&out)])), 0);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("native.json.report.json")).unwrap()).unwrap();
    assert_eq!(report["entries"].as_array().unwrap().len(), 0);
    assert_eq!(load_native(&out).unwrap().horizon, 3);
}

#[test]
fn convert_rejects_unsupported_input() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("case.json");
    // A decreasing production curve is not convex.
    fs::write(&src, PGLIB.replace(r#"{"mw": 80.0, "cost": 1900.0}"#, r#"{"mw": 10.0, "cost": 1900.0}"#)).unwrap();
    let out = chp(&["convert", s(&src), s(&dir.path().join("n.json"))]);
    assert_ne!(code(&out), 0);
}

#[test]
fn solve_writes_prices_log_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let inst = tiny(dir.path());
    let out = dir.path().join("run");
    let o = chp(&["solve", s(&inst), "--method", "BPLM", "--param", "alpha_level=0.3", "--max-iter", "30", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let horizon = load_native(&inst).unwrap().horizon;
    let prices: Vec<f64> = serde_json::from_str(&fs::read_to_string(out.join("prices.json")).unwrap()).unwrap();
    assert_eq!(prices.len(), horizon);
    assert_eq!(fs::read_to_string(out.join("prices.csv")).unwrap().lines().count(), horizon + 1);
    let log = read_log_csv(fs::File::open(out.join("log.csv")).unwrap()).unwrap();
    assert!(!log.is_empty() && log.len() <= 30);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["method"], "BPLM");
    assert_eq!(summary["param"], 0.3);
}

#[test]
fn zero_budget_returns_the_warm_start() {
    let dir = tempfile::tempdir().unwrap();
    let inst_path = tiny(dir.path());
    let out = dir.path().join("run");
    let o = chp(&["solve", s(&inst_path), "--method", "SUBG", "--budget-s", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let prices: Vec<f64> = serde_json::from_str(&fs::read_to_string(out.join("prices.json")).unwrap()).unwrap();
    let ws = chp_core::oracle::warm_start(&load_native(&inst_path).unwrap()).unwrap();
    assert_eq!(prices, ws.prices);
}

#[test]
fn cold_start_and_reference_error() {
    let dir = tempfile::tempdir().unwrap();
    let inst = tiny(dir.path());
    let ref_path = dir.path().join("ref.json");
    assert_eq!(code(&chp(&["reference", s(&inst), "--mode", "brute-force", "--out", s(&ref_path)])), 0);
    let reference: ReferenceOptimum = serde_json::from_str(&fs::read_to_string(&ref_path).unwrap()).unwrap();
    let out = dir.path().join("run");
    let o = chp(&[
        "solve",
        s(&inst),
        "--method",
        "SUBG-EP",
        "--cold-start",
        "40",
        "--max-iter",
        "1",
        "--reference",
        s(&ref_path),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["start"]["flat"], 40.0);
    assert_eq!(summary["reference_l_star"], reference.l_star);
    assert!(summary["relative_error"]["value"].as_f64().unwrap() >= -1e-9);
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let inst = tiny(dir.path());
    assert_eq!(code(&chp(&["solve", s(&inst), "--method", "NEWTON"])), 1);
    assert_eq!(code(&chp(&["solve", s(&inst), "--method", "BLM", "--param", "alpha_level=1.5"])), 1);
    assert_eq!(code(&chp(&["solve", s(&inst), "--method", "BLM", "--param", "bogus=1"])), 1);
    assert_eq!(code(&chp(&["frobnicate"])), 1);
    assert_eq!(code(&chp(&["--help"])), 0);
    let o = Command::new(env!("CARGO_BIN_EXE_chp")).args(["validate", s(&inst)]).env("CHP_SOLVER", "gurobi").output().unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn check_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let path = tiny(dir.path());
    let inst = load_native(&path).unwrap();
    // Everything off, nothing served.
    let off = Schedule {
        generators: inst
            .generators
            .iter()
            .map(|_| GeneratorSchedule {
                p: vec![0.0; inst.horizon],
                u: vec![0.0; inst.horizon],
                v: vec![0.0; inst.horizon],
                w: vec![0.0; inst.horizon],
            })
            .collect(),
        served: vec![0.0; inst.horizon],
    };
    let sched = dir.path().join("s.json");
    fs::write(&sched, serde_json::to_string(&off).unwrap()).unwrap();
    let o = chp(&["check", s(&path), s(&sched)]);
    let feasible = chp_core::model::check_schedule(&inst, &off).unwrap().is_empty();
    assert_eq!(code(&o), if feasible { 0 } else { 2 });

    let mut bad = off.clone();
    bad.served[0] = -1.0;
    fs::write(&sched, serde_json::to_string(&bad).unwrap()).unwrap();
    assert_eq!(code(&chp(&["check", s(&path), s(&sched)])), 2);
}

#[test]
fn bench_is_deterministic_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let inst = tiny(dir.path());
    let ref_path = dir.path().join("ref.json");
    assert_eq!(code(&chp(&["reference", s(&inst), "--mode", "brute-force", "--out", s(&ref_path)])), 0);
    let reference: ReferenceOptimum = serde_json::from_str(&fs::read_to_string(&ref_path).unwrap()).unwrap();
    let run = |out: &Path| {
        let o = chp(&[
            "bench",
            s(&inst),
            "--method",
            "SUBG-EP=10",
            "--method",
            "BPLM=0.5",
            "--reference",
            s(&ref_path),
            "--max-iter",
            "40",
            "--virtual-clock",
            "0.5",
            "--checkpoints",
            "5,20",
            "--threshold",
            "1e-5",
            "--out",
            s(out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a);
    run(&b);
    let table = fs::read_to_string(a.join("final_error.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "instance,SUBG-EP,BPLM");
    for name in ["final_error.csv", "error_at_5s.csv", "error_at_20s.csv", "time_to_threshold.csv", "report.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    // The threshold column agrees with a recomputation from the emitted logs.
    let ttt = fs::read_to_string(a.join("time_to_threshold.csv")).unwrap();
    let row: Vec<&str> = ttt.lines().nth(1).unwrap().split(',').collect();
    for (col, m) in ["SUBG-EP", "BPLM"].iter().enumerate() {
        let log = read_log_csv(fs::File::open(a.join("logs").join(format!("{}__{m}.csv", reference.instance))).unwrap()).unwrap();
        let expect = match time_to_threshold(&log, reference.l_star, 1e-5).seconds() {
            Some(t) => format!("{t:.6e}"),
            None => "X".into(),
        };
        assert_eq!(row[col + 1], expect);
    }
}
