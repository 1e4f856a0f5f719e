//! Shared end-to-end cases and golden-file comparison for the CLI tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub const GOLDEN_TOL: f64 = 1e-6;

pub struct Case {
    pub name: &'static str,
    pub args: &'static [&'static str],
    pub exit: i32,
    /// `json`, `csv` or `none` (no stdout expected).
    pub golden: &'static str,
}

macro_rules! case {
    ($name:literal, [$($arg:literal),*], $exit:literal, $golden:literal) => {
        Case { name: $name, args: &[$($arg),*], exit: $exit, golden: $golden }
    };
}

/// `@` at the start of an argument stands for the fixtures directory.
pub const CASES: &[Case] = &[
    case!("validate_pr_box", ["validate", "@pr_box.json"], 0, "json"),
    case!("validate_quantum_chsh", ["validate", "@quantum_chsh.json"], 0, "json"),
    case!("validate_chsh_embeddable", ["validate", "@chsh_embeddable.json"], 0, "json"),
    case!("validate_invalid", ["validate", "@invalid_behavior.json"], 1, "json"),
    case!("validate_malformed", ["validate", "@malformed.json"], 2, "none"),
    case!("embed_pr_box", ["embed", "@pr_box.json"], 1, "json"),
    case!("embed_quantum_chsh", ["embed", "@quantum_chsh.json"], 1, "json"),
    case!("embed_chsh_embeddable", ["embed", "@chsh_embeddable.json"], 0, "json"),
    case!("embed_disturbing", ["embed", "@disturbing.json"], 1, "json"),
    case!("embed_store_context", ["embed", "@store_context.json"], 1, "json"),
    case!("embed_csv_rejected", ["embed", "@pr_box.json", "--format", "csv"], 2, "none"),
    case!(
        "interfere_quarter_turn",
        ["interfere", "--p-a", "0.3", "--p-b-given-a", "0.6", "--p-b-given-not-a", "0.2", "--theta", "1.5707963267948966"],
        0,
        "json"
    ),
    case!(
        "interfere_out_of_range",
        ["interfere", "--p-a", "0.5", "--p-b-given-a", "1", "--p-b-given-not-a", "1", "--theta", "0"],
        1,
        "json"
    ),
    case!(
        "phase_inline",
        ["phase", "--p-a", "0.5", "--p-b-given-a", "0.6", "--p-b-given-not-a", "0.2", "--observed", "0.3"],
        0,
        "json"
    ),
    case!(
        "phase_infeasible",
        ["phase", "--p-a", "0.5", "--p-b-given-a", "0.1", "--p-b-given-not-a", "0.1", "--observed", "0.9"],
        1,
        "json"
    ),
    case!(
        "phase_behavior",
        ["phase", "--behavior", "@interference_events.json", "--event-a", "A", "--event-b", "B"],
        0,
        "json"
    ),
    case!(
        "phase_degenerate",
        ["phase", "--p-a", "1", "--p-b-given-a", "0.5", "--p-b-given-not-a", "0.5", "--observed", "0.5"],
        2,
        "none"
    ),
    case!("order_effect_qubit", ["order-effect", "--model", "@qubit_45.json", "--first", "A", "--second", "B"], 1, "json"),
    case!(
        "order_effect_commuting",
        ["order-effect", "--model", "@commuting_model.json", "--first", "A", "--second", "B"],
        0,
        "json"
    ),
    case!("holonomy_flat", ["holonomy", "--atlas", "@atlas_flat.json"], 0, "json"),
    case!("holonomy_nonflat", ["holonomy", "--atlas", "@atlas_nonflat.json"], 1, "json"),
    case!("holonomy_loop", ["holonomy", "--atlas", "@atlas_nonflat.json", "--loop", "w0,w1,w2,w0"], 1, "json"),
    case!("holonomy_csv", ["holonomy", "--atlas", "@atlas_nonflat.json", "--format", "csv"], 1, "csv"),
    case!("holonomy_open_loop", ["holonomy", "--atlas", "@atlas_flat.json", "--loop", "w0,w1"], 2, "none"),
    case!("bookkeeping_store_context", ["bookkeeping", "@store_context.json"], 1, "json"),
    case!(
        "bookkeeping_store_context_prior",
        ["bookkeeping", "@store_context.json", "--context-prior", "@context_prior.json"],
        1,
        "json"
    ),
    case!("bookkeeping_pr_box", ["bookkeeping", "@pr_box.json"], 1, "json"),
    case!("bookkeeping_embeddable", ["bookkeeping", "@chsh_embeddable.json"], 0, "json"),
    case!("bell_pr_box", ["bell", "@bipartite_pr_box.json"], 1, "json"),
    case!("bell_quantum_csv", ["bell", "@bipartite_quantum.json", "--format", "csv"], 1, "csv"),
    case!("bell_local", ["bell", "@bipartite_local.json"], 0, "json"),
    case!("nosignal_pr_box", ["nosignal", "@bipartite_pr_box.json"], 0, "json"),
    case!("nosignal_signalling", ["nosignal", "@bipartite_signalling.json"], 1, "json"),
    case!("tradeoff_csv", ["tradeoff", "--config", "@tradeoff.json", "--format", "csv"], 0, "csv"),
    case!("tradeoff_seed_override", ["tradeoff", "--config", "@tradeoff.json", "--seed", "11"], 0, "json"),
];

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().expect("workspace root")
}

pub fn fixtures_dir() -> PathBuf {
    workspace_root().join("fixtures")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn expand_args(args: &[&str], fixtures: &Path) -> Vec<String> {
    args.iter()
        .map(|a| match a.strip_prefix('@') {
            Some(rest) => fixtures.join(rest).to_string_lossy().into_owned(),
            None => a.to_string(),
        })
        .collect()
}

pub fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctxform"))
}

pub fn run_case(case: &Case) -> Output {
    binary()
        .args(expand_args(case.args, &fixtures_dir()))
        .output()
        .expect("binary runs")
}

/// Recursive comparison with numeric leaves equal within `tol`.
pub fn json_close(a: &Value, b: &Value, tol: f64, path: &str) -> Result<(), String> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            if (x - y).abs() <= tol * (1.0 + y.abs()) {
                Ok(())
            } else {
                Err(format!("{path}: {x} vs golden {y}"))
            }
        }
        (Value::Array(xs), Value::Array(ys)) => {
            if xs.len() != ys.len() {
                return Err(format!("{path}: length {} vs golden {}", xs.len(), ys.len()));
            }
            for (k, (x, y)) in xs.iter().zip(ys).enumerate() {
                json_close(x, y, tol, &format!("{path}[{k}]"))?;
            }
            Ok(())
        }
        (Value::Object(xs), Value::Object(ys)) => {
            let kx: Vec<_> = xs.keys().collect();
            let ky: Vec<_> = ys.keys().collect();
            if kx != ky {
                return Err(format!("{path}: keys {kx:?} vs golden {ky:?}"));
            }
            for (k, x) in xs {
                json_close(x, &ys[k], tol, &format!("{path}.{k}"))?;
            }
            Ok(())
        }
        _ if a == b => Ok(()),
        _ => Err(format!("{path}: {a} vs golden {b}")),
    }
}

pub fn csv_close(a: &str, b: &str, tol: f64) -> Result<(), String> {
    let la: Vec<&str> = a.lines().collect();
    let lb: Vec<&str> = b.lines().collect();
    if la.len() != lb.len() {
        return Err(format!("{} rows vs golden {}", la.len(), lb.len()));
    }
    for (r, (x, y)) in la.iter().zip(&lb).enumerate() {
        let cx: Vec<&str> = x.split(',').collect();
        let cy: Vec<&str> = y.split(',').collect();
        if cx.len() != cy.len() {
            return Err(format!("row {r}: {} cells vs golden {}", cx.len(), cy.len()));
        }
        for (u, v) in cx.iter().zip(&cy) {
            let same = match (u.parse::<f64>(), v.parse::<f64>()) {
                (Ok(p), Ok(q)) => (p - q).abs() <= tol * (1.0 + q.abs()),
                _ => u == v,
            };
            if !same {
                return Err(format!("row {r}: `{u}` vs golden `{v}`"));
            }
        }
    }
    Ok(())
}

/// Checks exit status and stdout against the golden file. With
/// `CTXFORM_UPDATE_GOLDEN=1` the golden file is rewritten instead.
pub fn check_case(case: &Case, out: &Output) -> Result<(), String> {
    let code = out.status.code().unwrap_or(-1);
    if code != case.exit {
        return Err(format!(
            "exit {code}, expected {} (stderr: {})",
            case.exit,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    if case.golden == "none" {
        if case.exit == 2 && out.stderr.is_empty() {
            return Err("error exit without a message on stderr".into());
        }
        return Ok(());
    }
    let path = golden_dir().join(format!("{}.{}", case.name, case.golden));
    if std::env::var_os("CTXFORM_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::write(&path, stdout.as_bytes()).unwrap();
        return Ok(());
    }
    let golden = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if case.golden == "json" {
        let a: Value = serde_json::from_str(&stdout).map_err(|e| format!("stdout is not JSON: {e}"))?;
        let b: Value = serde_json::from_str(&golden).map_err(|e| format!("golden is not JSON: {e}"))?;
        json_close(&a, &b, GOLDEN_TOL, "$")
    } else {
        csv_close(&stdout, &golden, GOLDEN_TOL)
    }
}
