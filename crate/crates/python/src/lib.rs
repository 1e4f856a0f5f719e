//! Python bindings for `ctxform`.
//!
//! Inputs that have a JSON file format (behaviors, atlases, models,
//! bipartite tables, tradeoff configs) are accepted either as JSON text or
//! as the equivalent Python dict. Structured results come back as plain
//! dicts and lists.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use ctxform::bookkeeping::{min_bookkeeping_with_prior, BookkeepingCaps};
use ctxform::embedding::check_boolean_embedding;
use ctxform::holonomy::{flatness_check, gluing_phase, loop_holonomy, parse_atlas, TransportedBranch};
use ctxform::intervention::{commutator_norm, order_effect_report, parse_model, sequential_stats};
use ctxform::io::{behavior_from_file, behavior_to_json, validate_behavior_file, BehaviorFile};
use ctxform::nonlocality::{check_no_signalling, chsh_value, from_correlators, local_decomposition, parse_bipartite};
use ctxform::projection::{extract_phase, glued_projection, interference_term, ltp_predict, GluingPhase};
use ctxform::scenario::check_no_disturbance;
use ctxform::tradeoff::{parse_tradeoff_config, report_to_csv_string, run_tradeoff as run_tradeoff_core};
use ctxform::DEFAULT_TOL;

create_exception!(pyctxform, CtxformError, PyException, "Raised for invalid input or a failed analysis.");

fn err(e: impl std::fmt::Display) -> PyErr {
    CtxformError::new_err(e.to_string())
}

/// JSON text of a `str` argument, or of a dict/list via `json.dumps`.
fn json_text(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(s) = obj.extract::<String>() {
        return Ok(s);
    }
    obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(frozen, module = "pyctxform")]
struct Behavior {
    inner: ctxform::Behavior,
}

#[pymethods]
impl Behavior {
    #[new]
    fn new(data: &Bound<'_, PyAny>) -> PyResult<Self> {
        let file: BehaviorFile = serde_json::from_str(&json_text(data)?).map_err(err)?;
        Ok(Behavior {
            inner: behavior_from_file(&file).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Behavior {
            inner: ctxform::io::load_behavior(path.as_ref()).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        behavior_to_json(&self.inner)
    }

    fn tables(&self) -> BTreeMap<String, Vec<f64>> {
        self.inner.tables_by_id()
    }

    fn cells(&self) -> Vec<f64> {
        self.inner.cells()
    }

    #[pyo3(signature = (tol = DEFAULT_TOL))]
    fn check_embedding<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &check_boolean_embedding(&self.inner, tol).map_err(err)?)
    }

    #[pyo3(signature = (tol = DEFAULT_TOL))]
    fn check_no_disturbance<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &check_no_disturbance(&self.inner, tol))
    }

    #[pyo3(signature = (max_lambda = 4, max_memory = 4, tol = DEFAULT_TOL, context_prior = None))]
    fn min_bookkeeping<'py>(
        &self,
        py: Python<'py>,
        max_lambda: usize,
        max_memory: usize,
        tol: f64,
        context_prior: Option<BTreeMap<String, f64>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let caps = BookkeepingCaps {
            max_lambda,
            max_memory,
            ..BookkeepingCaps::default()
        };
        let report = py
            .detach(|| min_bookkeeping_with_prior(&self.inner, caps, tol, context_prior.as_ref()))
            .map_err(err)?;
        to_py(py, &report)
    }

    /// Branch statistics for events `a` and `b` (outcome 0 as "yes").
    fn branch_data(&self, event_a: &str, event_b: &str) -> PyResult<(BranchData, Option<f64>)> {
        let (d, observed) = ctxform::projection::branch_data_from_behavior(&self.inner, event_a, event_b).map_err(err)?;
        Ok((BranchData { inner: d }, observed))
    }
}

/// Schema and normalization problems of a behavior file, as `(location, message)` pairs.
#[pyfunction]
fn validate_behavior(data: &Bound<'_, PyAny>) -> PyResult<Vec<(String, String)>> {
    let file: BehaviorFile = serde_json::from_str(&json_text(data)?).map_err(err)?;
    Ok(validate_behavior_file(&file)
        .into_iter()
        .map(|v| (v.location, v.message))
        .collect())
}

#[pyclass(frozen, module = "pyctxform")]
struct BranchData {
    inner: ctxform::projection::BranchData,
}

#[pymethods]
impl BranchData {
    #[new]
    fn new(p_a: f64, p_b_given_a: f64, p_b_given_not_a: f64) -> PyResult<Self> {
        Ok(BranchData {
            inner: ctxform::projection::BranchData::from_partition(p_a, p_b_given_a, p_b_given_not_a).map_err(err)?,
        })
    }

    #[getter]
    fn p_a(&self) -> f64 {
        self.inner.p_a
    }

    #[getter]
    fn p_b_given_a(&self) -> f64 {
        self.inner.p_b_given_a
    }

    #[getter]
    fn p_not_a(&self) -> f64 {
        self.inner.p_not_a
    }

    #[getter]
    fn p_b_given_not_a(&self) -> f64 {
        self.inner.p_b_given_not_a
    }

    fn ltp(&self) -> f64 {
        ltp_predict(&self.inner)
    }

    fn glued_projection(&self, theta: f64) -> f64 {
        glued_projection(&self.inner, GluingPhase::new(theta)).probability
    }

    fn interference(&self, theta: f64) -> f64 {
        interference_term(&self.inner, GluingPhase::new(theta))
    }

    #[pyo3(signature = (observed, tol = DEFAULT_TOL))]
    fn extract_phase<'py>(&self, py: Python<'py>, observed: f64, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &extract_phase(observed, &self.inner, tol).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!(
            "BranchData(p_a={}, p_b_given_a={}, p_b_given_not_a={})",
            self.inner.p_a, self.inner.p_b_given_a, self.inner.p_b_given_not_a
        )
    }
}

#[pyclass(frozen, module = "pyctxform")]
struct Atlas {
    inner: ctxform::holonomy::Atlas,
}

#[pymethods]
impl Atlas {
    #[new]
    fn new(data: &Bound<'_, PyAny>) -> PyResult<Self> {
        Ok(Atlas {
            inner: parse_atlas(&json_text(data)?).map_err(err)?,
        })
    }

    #[pyo3(signature = (path, tol = DEFAULT_TOL))]
    fn loop_holonomy<'py>(&self, py: Python<'py>, path: Vec<String>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        let refs: Vec<&str> = path.iter().map(String::as_str).collect();
        to_py(py, &loop_holonomy(&self.inner, &refs, tol).map_err(err)?)
    }

    #[pyo3(signature = (max_loop_len = ctxform::holonomy::DEFAULT_MAX_LOOP_LEN, tol = DEFAULT_TOL))]
    fn flatness_check<'py>(&self, py: Python<'py>, max_loop_len: usize, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &flatness_check(&self.inner, max_loop_len, tol).map_err(err)?)
    }

    fn gauge_transform(&self, delta: BTreeMap<String, f64>) -> Atlas {
        Atlas {
            inner: self.inner.gauge_transform(&delta),
        }
    }

    /// Relative phase of two branches transported along paths ending in the same world.
    fn gluing_phase(&self, path_a: Vec<String>, atom_a: &str, path_not_a: Vec<String>, atom_not_a: &str) -> PyResult<f64> {
        let pa: Vec<&str> = path_a.iter().map(String::as_str).collect();
        let pna: Vec<&str> = path_not_a.iter().map(String::as_str).collect();
        let theta = gluing_phase(
            &self.inner,
            TransportedBranch { path: &pa, atom: atom_a },
            TransportedBranch {
                path: &pna,
                atom: atom_not_a,
            },
        )
        .map_err(err)?;
        Ok(theta.radians())
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner.to_file()).map_err(err)
    }
}

#[pyclass(frozen, module = "pyctxform")]
struct InterventionModel {
    inner: ctxform::intervention::InterventionModel,
}

#[pymethods]
impl InterventionModel {
    #[new]
    fn new(data: &Bound<'_, PyAny>) -> PyResult<Self> {
        Ok(InterventionModel {
            inner: parse_model(&json_text(data)?).map_err(err)?,
        })
    }

    fn op_ids(&self) -> Vec<String> {
        self.inner.ops.keys().cloned().collect()
    }

    /// Row-major joint over outcome tuples in the given order.
    fn sequential_stats(&self, order: Vec<String>) -> PyResult<(Vec<usize>, Vec<f64>)> {
        let refs: Vec<&str> = order.iter().map(String::as_str).collect();
        let joint = sequential_stats(&self.inner, &refs).map_err(err)?;
        Ok((joint.shape, joint.weights))
    }

    fn order_effect<'py>(&self, py: Python<'py>, first: &str, second: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &order_effect_report(&self.inner, first, second).map_err(err)?)
    }

    fn commutator_norm(&self, a: &str, b: &str) -> PyResult<f64> {
        commutator_norm(self.inner.op(a).map_err(err)?, self.inner.op(b).map_err(err)?).map_err(err)
    }
}

#[pyclass(frozen, module = "pyctxform")]
struct BipartiteBehavior {
    inner: ctxform::nonlocality::BipartiteBehavior,
}

#[pymethods]
impl BipartiteBehavior {
    #[new]
    fn new(data: &Bound<'_, PyAny>) -> PyResult<Self> {
        Ok(BipartiteBehavior {
            inner: parse_bipartite(&json_text(data)?).map_err(err)?,
        })
    }

    #[staticmethod]
    fn pr_box() -> Self {
        BipartiteBehavior {
            inner: ctxform::nonlocality::pr_box(),
        }
    }

    /// Binary-outcome behavior with uniform marginals and correlators `e[x][y]`.
    #[staticmethod]
    fn from_correlators(e: [[f64; 2]; 2]) -> PyResult<Self> {
        Ok(BipartiteBehavior {
            inner: from_correlators(e).map_err(err)?,
        })
    }

    fn prob(&self, a: usize, b: usize, x: usize, y: usize) -> PyResult<f64> {
        let (sx, sy) = self.inner.settings();
        let (oa, ob) = self.inner.outcomes();
        if x >= sx || y >= sy || a >= oa || b >= ob {
            return Err(err("index out of range"));
        }
        Ok(self.inner.prob(a, b, x, y))
    }

    fn chsh(&self) -> PyResult<f64> {
        chsh_value(&self.inner).map_err(err)
    }

    #[pyo3(signature = (tol = DEFAULT_TOL))]
    fn no_signalling<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &check_no_signalling(&self.inner, tol))
    }

    #[pyo3(signature = (tol = DEFAULT_TOL))]
    fn local_decomposition<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &local_decomposition(&self.inner, tol).map_err(err)?)
    }

    fn to_behavior(&self) -> PyResult<Behavior> {
        Ok(Behavior {
            inner: self.inner.to_scenario().map_err(err)?,
        })
    }
}

fn tradeoff_config(config: &Bound<'_, PyAny>, seed: Option<u64>) -> PyResult<ctxform::tradeoff::TradeoffConfig> {
    let mut cfg = parse_tradeoff_config(&json_text(config)?).map_err(err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Full tradeoff report as a dict; `seed` overrides the config's seed.
#[pyfunction]
#[pyo3(signature = (config, seed = None))]
fn run_tradeoff<'py>(config: &Bound<'py, PyAny>, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = tradeoff_config(config, seed)?;
    let py = config.py();
    let report = py.detach(|| run_tradeoff_core(&cfg)).map_err(err)?;
    to_py(py, &report)
}

/// Tradeoff rows as CSV text (`seed,m,I_abs,theta,order_effect,I_MC`).
#[pyfunction]
#[pyo3(signature = (config, seed = None))]
fn tradeoff_csv(config: &Bound<'_, PyAny>, seed: Option<u64>) -> PyResult<String> {
    let cfg = tradeoff_config(config, seed)?;
    let report = config.py().detach(|| run_tradeoff_core(&cfg)).map_err(err)?;
    report_to_csv_string(&report).map_err(err)
}

#[pymodule]
mod pyctxform {
    #[pymodule_export]
    use super::{
        run_tradeoff, tradeoff_csv, validate_behavior, Atlas, Behavior, BipartiteBehavior, BranchData, CtxformError,
        InterventionModel,
    };
}
