//! Reading and writing the JSON file formats.
//!
//! Parse errors carry the line and column reported by the JSON parser;
//! schema violations name the offending field path (for example
//! `tables.c1[2]`).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{validate_scenario, Behavior, Context, Distribution, Observable, Scenario, Violation, DEFAULT_TOL};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorFile {
    pub observables: Vec<Observable>,
    pub contexts: Vec<Context>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tables: Option<BTreeMap<String, Vec<f64>>>,
    /// Free-form tag naming the kind of realization model behind the tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_kind: Option<String>,
}

/// Parses a scenario file without tables, or ignoring them.
pub fn parse_scenario(json: &str) -> Result<Scenario> {
    let file: BehaviorFile = serde_json::from_str(json)?;
    scenario_from_file(&file)
}

fn scenario_from_file(file: &BehaviorFile) -> Result<Scenario> {
    let s = Scenario {
        observables: file.observables.clone(),
        contexts: file.contexts.clone(),
    };
    let report = validate_scenario(&s);
    if let Some(v) = report.violations.first() {
        return Err(Error::schema(v.location.clone(), v.message.clone()));
    }
    Ok(s)
}

/// Every problem in a scenario or behavior file, in file order. Tables are
/// only checked when the scenario itself is valid.
pub fn validate_behavior_file(file: &BehaviorFile) -> Vec<Violation> {
    let s = Scenario {
        observables: file.observables.clone(),
        contexts: file.contexts.clone(),
    };
    let mut violations = validate_scenario(&s).violations;
    let Some(tables) = &file.tables else {
        return violations;
    };
    if !violations.is_empty() {
        return violations;
    }
    let mut push = |location: String, message: String| violations.push(Violation { location, message });
    for id in tables.keys() {
        if s.context_index(id).is_err() {
            push(format!("tables.{id}"), "no context with this id".into());
        }
    }
    for (c, ctx) in s.contexts.iter().enumerate() {
        let path = format!("tables.{}", ctx.id);
        let Some(raw) = tables.get(&ctx.id) else {
            push(path, "missing table".into());
            continue;
        };
        if raw.len() != s.context_size(c) {
            push(path, format!("expected {} cells, found {}", s.context_size(c), raw.len()));
            continue;
        }
        let mut bad_entry = false;
        for (k, &w) in raw.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                push(format!("{path}[{k}]"), format!("weight {w} is not a probability"));
                bad_entry = true;
            }
        }
        let total: f64 = raw.iter().sum();
        if !bad_entry && (total - 1.0).abs() > DEFAULT_TOL {
            push(path, format!("weights sum to {total}"));
        }
    }
    violations
}

/// Parses a behavior file; every context needs a table.
pub fn parse_behavior(json: &str) -> Result<Behavior> {
    let file: BehaviorFile = serde_json::from_str(json)?;
    behavior_from_file(&file)
}

pub fn behavior_from_file(file: &BehaviorFile) -> Result<Behavior> {
    let s = scenario_from_file(file)?;
    let tables = file
        .tables
        .as_ref()
        .ok_or_else(|| Error::schema("tables", "missing"))?;
    for id in tables.keys() {
        if s.context_index(id).is_err() {
            return Err(Error::schema(format!("tables.{id}"), "no context with this id"));
        }
    }
    let mut out = Vec::with_capacity(s.contexts.len());
    for (c, ctx) in s.contexts.iter().enumerate() {
        let path = format!("tables.{}", ctx.id);
        let raw = tables.get(&ctx.id).ok_or_else(|| Error::schema(&path, "missing table"))?;
        if raw.len() != s.context_size(c) {
            return Err(Error::schema(
                &path,
                format!("expected {} cells, found {}", s.context_size(c), raw.len()),
            ));
        }
        if let Some(k) = raw.iter().position(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::schema(format!("{path}[{k}]"), format!("weight {} is not a probability", raw[k])));
        }
        let total: f64 = raw.iter().sum();
        if (total - 1.0).abs() > DEFAULT_TOL {
            return Err(Error::schema(&path, format!("weights sum to {total}")));
        }
        out.push(Distribution::new(raw.clone(), DEFAULT_TOL)?);
    }
    Behavior::new(s, out)
}

pub fn behavior_to_file(b: &Behavior) -> BehaviorFile {
    let s = b.scenario();
    BehaviorFile {
        observables: s.observables.clone(),
        contexts: s.contexts.clone(),
        tables: Some(b.tables_by_id()),
        model_kind: None,
    }
}

/// Pretty JSON; floats are written in shortest round-trip form.
pub fn behavior_to_json(b: &Behavior) -> String {
    serde_json::to_string_pretty(&behavior_to_file(b)).expect("behavior serializes")
}

pub fn read_to_string(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

pub fn load_behavior(path: &Path) -> Result<Behavior> {
    parse_behavior(&read_to_string(path)?)
}

pub fn save_behavior(b: &Behavior, path: &Path) -> Result<()> {
    write_atomic(path, behavior_to_json(b).as_bytes())
}

/// Writes through a temporary file in the destination directory and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CHSH: &str = r#"{
        "observables": [{"id": "A0", "arity": 2}, {"id": "A1", "arity": 2}, {"id": "B0", "arity": 2}, {"id": "B1", "arity": 2}],
        "contexts": [
            {"id": "0,0", "observables": ["A0", "B0"]},
            {"id": "0,1", "observables": ["A0", "B1"]},
            {"id": "1,0", "observables": ["A1", "B0"]},
            {"id": "1,1", "observables": ["A1", "B1"]}
        ],
        "tables": {
            "0,0": [0.5, 0, 0, 0.5], "0,1": [0.5, 0, 0, 0.5],
            "1,0": [0.5, 0, 0, 0.5], "1,1": [0, 0.5, 0.5, 0]
        }
    }"#;

    #[test]
    fn parses_and_roundtrips() {
        let b = parse_behavior(CHSH).unwrap();
        assert_eq!(b.table("1,1").unwrap().weights(), &[0.0, 0.5, 0.5, 0.0]);
        assert_eq!(parse_behavior(&behavior_to_json(&b)).unwrap(), b);
    }

    #[test]
    fn negative_weight_names_field() {
        let bad = CHSH.replace(r#""1,0": [0.5, 0, 0, 0.5]"#, r#""1,0": [0.6, -0.1, 0, 0.5]"#);
        match parse_behavior(&bad) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "tables.1,0[1]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_behavior("{\n  \"observables\": [,]\n}") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 19)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_errors() {
        let unknown = CHSH.replace(r#"["A1", "B1"]"#, r#"["A1", "Z"]"#);
        assert!(matches!(parse_behavior(&unknown), Err(Error::Schema { path, .. }) if path == "contexts[3].observables[1]"));
        let missing = CHSH.replace(r#""1,1": [0, 0.5, 0.5, 0]"#, r#""2,2": [0, 0.5, 0.5, 0]"#);
        assert!(matches!(parse_behavior(&missing), Err(Error::Schema { .. })));
        let short = CHSH.replace(r#""1,1": [0, 0.5, 0.5, 0]"#, r#""1,1": [0.5, 0.5]"#);
        assert!(matches!(parse_behavior(&short), Err(Error::Schema { path, .. }) if path == "tables.1,1"));
        assert!(parse_scenario(CHSH).is_ok());
    }

    #[test]
    fn validation_collects_all_problems() {
        let bad = CHSH
            .replace(r#""1,0": [0.5, 0, 0, 0.5]"#, r#""1,0": [0.6, -0.1, 0, 0.5]"#)
            .replace(r#""0,0": [0.5, 0, 0, 0.5]"#, r#""0,0": [0.5, 0, 0, 0.6]"#);
        let file: BehaviorFile = serde_json::from_str(&bad).unwrap();
        let v = validate_behavior_file(&file);
        let locations: Vec<&str> = v.iter().map(|v| v.location.as_str()).collect();
        assert_eq!(locations, vec!["tables.0,0", "tables.1,0[1]"]);
        let good: BehaviorFile = serde_json::from_str(CHSH).unwrap();
        assert!(validate_behavior_file(&good).is_empty());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.json");
        std::fs::write(&path, "old").unwrap();
        save_behavior(&parse_behavior(CHSH).unwrap(), &path).unwrap();
        assert!(load_behavior(&path).is_ok());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    proptest! {
        #[test]
        fn roundtrip_is_exact(raw in proptest::collection::vec(1e-6f64..1.0, 8)) {
            let s = Scenario::new(
                vec![Observable::new("X", 2), Observable::new("Y", 2)],
                vec![Context::new("x", ["X"]), Context::new("xy", ["X", "Y"]), Context::new("y", ["Y"])],
            ).unwrap();
            let norm = |v: &[f64]| { let t: f64 = v.iter().sum(); v.iter().map(|x| x / t).collect::<Vec<_>>() };
            let joint = norm(&raw[..4]);
            let b = Behavior::from_joint(s, &joint).unwrap();
            let back = parse_behavior(&behavior_to_json(&b)).unwrap();
            prop_assert_eq!(back.cells(), b.cells());
        }
    }
}
