//! The native JSON instance format. Reals are written in shortest
//! round-trip decimal form, so save/load is bit-exact.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{validate_instance, Diagnostic, Instance};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("instance is invalid:\n{}", render(.0))]
    Invalid(Vec<Diagnostic>),
}

fn render(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}

/// Parses without validating.
pub fn parse_native_unchecked(text: &str) -> Result<Instance, LoadError> {
    serde_json::from_str(text).map_err(|e| LoadError::Parse { line: e.line(), column: e.column(), message: e.to_string() })
}

/// Parses and validates. Errors abort; over-long minimum up/down times are
/// clamped to the horizon.
pub fn parse_native(text: &str) -> Result<Instance, LoadError> {
    let mut inst = parse_native_unchecked(text)?;
    let diags = validate_instance(&inst);
    let errors: Vec<Diagnostic> = diags.into_iter().filter(|d| d.is_error()).collect();
    if !errors.is_empty() {
        return Err(LoadError::Invalid(errors));
    }
    inst.clamp_min_times();
    Ok(inst)
}

pub fn load_native(path: impl AsRef<Path>) -> Result<Instance, LoadError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.display().to_string(), source })?;
    parse_native(&text)
}

pub fn to_native_string(inst: &Instance) -> String {
    let mut s = serde_json::to_string_pretty(inst).expect("instance serializes");
    s.push('\n');
    s
}

pub fn save_native(inst: &Instance, path: impl AsRef<Path>) -> std::io::Result<()> {
    fs::write(path, to_native_string(inst))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
  "name": "mini",
  "horizon": 2,
  "voll": 3000.0,
  "demand": [30.0, 40.5],
  "generators": [
    {
      "id": "g1", "p_min": 10.0, "p_max": 50.0, "min_up": 1, "min_down": 1,
      "startup_level": 50.0, "shutdown_level": 50.0, "ramp_up": 50.0, "ramp_down": 50.0,
      "cost_marginal": 20.1, "cost_no_load": 5.0, "cost_startup": 100.0,
      "init_on": false, "init_power": 0.0, "init_periods_in_state": 1
    }
  ]
}"#;

    #[test]
    fn minimal_file() {
        let inst = parse_native(MINIMAL).unwrap();
        assert_eq!(inst.horizon, 2);
        assert_eq!(inst.generators[0].cost_marginal, 20.1);
    }

    #[test]
    fn missing_voll_names_the_field() {
        let text = MINIMAL.replace("\"voll\": 3000.0,", "");
        let err = parse_native(&text).unwrap_err();
        assert!(matches!(err, LoadError::Parse { .. }));
        assert!(err.to_string().contains("voll"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL.replace("\"horizon\": 2,", "\"horizon\": 2, \"extra\": 1,");
        let err = parse_native(&text).unwrap_err();
        assert!(err.to_string().contains("extra"), "{err}");
    }

    #[test]
    fn round_trip_is_identity() {
        let mut inst = parse_native(MINIMAL).unwrap();
        inst.demand[1] = 0.1 + 0.2;
        inst.generators[0].cost_startup = 1.0 / 3.0;
        let again = parse_native(&to_native_string(&inst)).unwrap();
        assert_eq!(again, inst);
        assert_eq!(again.demand[1].to_bits(), inst.demand[1].to_bits());
        assert_eq!(to_native_string(&again), to_native_string(&inst));
    }

    #[test]
    fn invalid_file_reports_diagnostics() {
        let text = MINIMAL.replace("\"p_min\": 10.0", "\"p_min\": 60.0");
        match parse_native(&text).unwrap_err() {
            LoadError::Invalid(d) => assert!(d.iter().any(|d| d.field == "p_min/p_max")),
            e => panic!("unexpected {e}"),
        }
    }
}
