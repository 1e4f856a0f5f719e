//! Contexts as interventions on one shared state.
//!
//! A state is either a probability vector acted on by column-stochastic maps,
//! or a unit complex vector acted on by a unitary followed by a projective
//! outcome decomposition (Lüders update). In both cases each outcome `k` has
//! a branch map `K_k`: `D_k T` for stochastic ops (`D_k` keeps the indices of
//! outcome class `k`) and `P_k U` for amplitude ops. Sequential statistics
//! branch on these maps.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bookkeeping::mutual_information;
use crate::error::{Error, Result};
use crate::scenario::{decode_outcome, encode_outcome};

const STATE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Stochastic,
    Amplitude,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SharedState {
    Stochastic(DVector<f64>),
    Amplitude(DVector<Complex64>),
}

impl SharedState {
    pub fn stochastic(v: Vec<f64>) -> Result<Self> {
        if v.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidModel("stochastic state has a negative or non-finite entry".into()));
        }
        let total: f64 = v.iter().sum();
        if (total - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidModel(format!("stochastic state sums to {total}")));
        }
        Ok(SharedState::Stochastic(DVector::from_vec(v)))
    }

    pub fn amplitude(v: Vec<Complex64>) -> Result<Self> {
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidModel(format!("amplitude state has norm {norm}")));
        }
        Ok(SharedState::Amplitude(DVector::from_vec(v)))
    }

    pub fn kind(&self) -> StateKind {
        match self {
            SharedState::Stochastic(_) => StateKind::Stochastic,
            SharedState::Amplitude(_) => StateKind::Amplitude,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            SharedState::Stochastic(v) => v.len(),
            SharedState::Amplitude(v) => v.len(),
        }
    }

    /// Deviation from the kind invariant: `|sum - 1|` or `|norm - 1|`.
    pub fn normalization_error(&self) -> f64 {
        match self {
            SharedState::Stochastic(v) => (v.sum() - 1.0).abs(),
            SharedState::Amplitude(v) => (v.norm() - 1.0).abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InterventionOp {
    Stochastic {
        id: String,
        action: DMatrix<f64>,
        /// Partition of state indices into outcome classes.
        outcomes: Vec<Vec<usize>>,
    },
    Amplitude {
        id: String,
        action: DMatrix<Complex64>,
        projectors: Vec<DMatrix<Complex64>>,
    },
}

fn max_abs<T: Copy>(m: &DMatrix<T>, abs: impl Fn(T) -> f64) -> f64 {
    m.iter().map(|&x| abs(x)).fold(0.0, f64::max)
}

impl InterventionOp {
    pub fn stochastic(id: impl Into<String>, action: DMatrix<f64>, outcomes: Option<Vec<Vec<usize>>>) -> Result<Self> {
        let id = id.into();
        let n = action.nrows();
        if action.ncols() != n {
            return Err(Error::InvalidModel(format!("op `{id}`: action is not square")));
        }
        if action.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidModel(format!("op `{id}`: negative transition weight")));
        }
        for (j, col) in action.column_iter().enumerate() {
            if (col.sum() - 1.0).abs() > STATE_TOL {
                return Err(Error::InvalidModel(format!("op `{id}`: column {j} sums to {}", col.sum())));
            }
        }
        let outcomes = outcomes.unwrap_or_else(|| (0..n).map(|i| vec![i]).collect());
        let mut seen = vec![false; n];
        for class in &outcomes {
            for &i in class {
                if i >= n || seen[i] {
                    return Err(Error::InvalidModel(format!("op `{id}`: outcome classes do not partition the states")));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) || outcomes.iter().any(|c| c.is_empty()) {
            return Err(Error::InvalidModel(format!("op `{id}`: outcome classes do not partition the states")));
        }
        Ok(InterventionOp::Stochastic { id, action, outcomes })
    }

    pub fn amplitude(
        id: impl Into<String>,
        action: DMatrix<Complex64>,
        projectors: Vec<DMatrix<Complex64>>,
    ) -> Result<Self> {
        let id = id.into();
        let n = action.nrows();
        if action.ncols() != n {
            return Err(Error::InvalidModel(format!("op `{id}`: action is not square")));
        }
        let eye = DMatrix::<Complex64>::identity(n, n);
        let unitarity = max_abs(&(action.adjoint() * &action - &eye), |z| z.norm());
        if unitarity > STATE_TOL {
            return Err(Error::InvalidModel(format!("op `{id}`: unitarity residual {unitarity}")));
        }
        if projectors.is_empty() {
            return Err(Error::InvalidModel(format!("op `{id}`: no projectors")));
        }
        let mut total = DMatrix::<Complex64>::zeros(n, n);
        for (i, p) in projectors.iter().enumerate() {
            if p.shape() != (n, n) {
                return Err(Error::InvalidModel(format!("op `{id}`: projector {i} has wrong shape")));
            }
            let herm = max_abs(&(p.adjoint() - p), |z| z.norm());
            let idem = max_abs(&(p * p - p), |z| z.norm());
            if herm > STATE_TOL || idem > STATE_TOL {
                return Err(Error::InvalidModel(format!("op `{id}`: projector {i} is not an orthogonal projector")));
            }
            for (j, q) in projectors.iter().enumerate().skip(i + 1) {
                if max_abs(&(p * q), |z| z.norm()) > STATE_TOL {
                    return Err(Error::InvalidModel(format!("op `{id}`: projectors {i} and {j} overlap")));
                }
            }
            total += p;
        }
        if max_abs(&(total - eye), |z| z.norm()) > STATE_TOL {
            return Err(Error::InvalidModel(format!("op `{id}`: projectors do not sum to the identity")));
        }
        Ok(InterventionOp::Amplitude { id, action, projectors })
    }

    pub fn id(&self) -> &str {
        match self {
            InterventionOp::Stochastic { id, .. } | InterventionOp::Amplitude { id, .. } => id,
        }
    }

    pub fn kind(&self) -> StateKind {
        match self {
            InterventionOp::Stochastic { .. } => StateKind::Stochastic,
            InterventionOp::Amplitude { .. } => StateKind::Amplitude,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            InterventionOp::Stochastic { action, .. } => action.nrows(),
            InterventionOp::Amplitude { action, .. } => action.nrows(),
        }
    }

    pub fn outcome_count(&self) -> usize {
        match self {
            InterventionOp::Stochastic { outcomes, .. } => outcomes.len(),
            InterventionOp::Amplitude { projectors, .. } => projectors.len(),
        }
    }

    fn check_compatible(&self, x: &SharedState) -> Result<()> {
        if self.kind() != x.kind() || self.dimension() != x.dimension() {
            return Err(Error::DimensionMismatch(format!(
                "op `{}` ({:?}, dim {}) applied to {:?} state of dim {}",
                self.id(),
                self.kind(),
                self.dimension(),
                x.kind(),
                x.dimension()
            )));
        }
        Ok(())
    }

    /// Branch maps lifted to complex matrices, one per outcome.
    fn branch_maps(&self) -> Vec<DMatrix<Complex64>> {
        match self {
            InterventionOp::Stochastic { action, outcomes, .. } => outcomes
                .iter()
                .map(|class| {
                    let mut m = DMatrix::<Complex64>::zeros(action.nrows(), action.ncols());
                    for &i in class {
                        for j in 0..action.ncols() {
                            m[(i, j)] = Complex64::new(action[(i, j)], 0.0);
                        }
                    }
                    m
                })
                .collect(),
            InterventionOp::Amplitude { action, projectors, .. } => {
                projectors.iter().map(|p| p * action).collect()
            }
        }
    }

    fn action_complex(&self) -> DMatrix<Complex64> {
        match self {
            InterventionOp::Stochastic { action, .. } => action.map(|x| Complex64::new(x, 0.0)),
            InterventionOp::Amplitude { action, .. } => action.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Applied {
    /// `action * x` before any outcome is selected.
    pub state: SharedState,
    pub outcome_probabilities: Vec<f64>,
    /// Renormalized post-state per outcome; `None` for zero-probability outcomes.
    pub branches: Vec<Option<SharedState>>,
}

/// Applies an intervention and splits the result by outcome.
pub fn apply(op: &InterventionOp, x: &SharedState) -> Result<Applied> {
    op.check_compatible(x)?;
    match (op, x) {
        (InterventionOp::Stochastic { action, outcomes, .. }, SharedState::Stochastic(v)) => {
            let y = action * v;
            let mut probs = Vec::with_capacity(outcomes.len());
            let mut branches = Vec::with_capacity(outcomes.len());
            for class in outcomes {
                let p: f64 = class.iter().map(|&i| y[i]).sum();
                probs.push(p);
                if p > 0.0 {
                    let mut b = DVector::zeros(y.len());
                    for &i in class {
                        b[i] = y[i] / p;
                    }
                    branches.push(Some(SharedState::Stochastic(b)));
                } else {
                    branches.push(None);
                }
            }
            Ok(Applied {
                state: SharedState::Stochastic(y),
                outcome_probabilities: probs,
                branches,
            })
        }
        (InterventionOp::Amplitude { action, projectors, .. }, SharedState::Amplitude(v)) => {
            let y = action * v;
            let mut probs = Vec::with_capacity(projectors.len());
            let mut branches = Vec::with_capacity(projectors.len());
            for p in projectors {
                let z = p * &y;
                let w = z.norm_squared();
                probs.push(w);
                if w > 0.0 {
                    branches.push(Some(SharedState::Amplitude(z.unscale(w.sqrt()))));
                } else {
                    branches.push(None);
                }
            }
            Ok(Applied {
                state: SharedState::Amplitude(y),
                outcome_probabilities: probs,
                branches,
            })
        }
        _ => unreachable!("compatibility checked above"),
    }
}

#[derive(Clone, Debug)]
pub struct InterventionModel {
    pub initial: SharedState,
    pub ops: BTreeMap<String, InterventionOp>,
    /// Optional prior over context sequences, keyed by comma-joined ids.
    pub context_prior: Option<BTreeMap<String, f64>>,
}

impl InterventionModel {
    pub fn new(
        initial: SharedState,
        ops: BTreeMap<String, InterventionOp>,
        context_prior: Option<BTreeMap<String, f64>>,
    ) -> Result<Self> {
        for op in ops.values() {
            op.check_compatible(&initial)
                .map_err(|e| Error::InvalidModel(e.to_string()))?;
        }
        if let Some(prior) = &context_prior {
            let total: f64 = prior.values().sum();
            if prior.values().any(|&p| p < 0.0) || (total - 1.0).abs() > STATE_TOL {
                return Err(Error::InvalidModel("context prior is not a distribution".into()));
            }
        }
        Ok(InterventionModel {
            initial,
            ops,
            context_prior,
        })
    }

    pub fn op(&self, id: &str) -> Result<&InterventionOp> {
        self.ops.get(id).ok_or_else(|| Error::UnknownContext(id.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequentialJoint {
    pub order: Vec<String>,
    /// Outcome count of each intervention in `order`.
    pub shape: Vec<usize>,
    /// Row-major over outcome tuples, last intervention fastest.
    pub weights: Vec<f64>,
}

impl SequentialJoint {
    pub fn get(&self, outcomes: &[usize]) -> f64 {
        self.weights[encode_outcome(&self.shape, outcomes)]
    }

    /// Marginal of the first `k` positions.
    pub fn prefix_marginal(&self, k: usize) -> Vec<f64> {
        let shape = &self.shape[..k];
        let mut out = vec![0.0; shape.iter().product()];
        for (i, &w) in self.weights.iter().enumerate() {
            let full = decode_outcome(&self.shape, i);
            out[encode_outcome(shape, &full[..k])] += w;
        }
        out
    }
}

/// Joint outcome distribution of applying `order` in sequence from the initial state.
pub fn sequential_stats(m: &InterventionModel, order: &[&str]) -> Result<SequentialJoint> {
    let ops: Vec<&InterventionOp> = order.iter().map(|id| m.op(id)).collect::<Result<_>>()?;
    let shape: Vec<usize> = ops.iter().map(|o| o.outcome_count()).collect();
    let mut weights = vec![0.0; shape.iter().product()];
    branch(&ops, &m.initial, 1.0, 0, &shape, &mut Vec::new(), &mut weights)?;
    Ok(SequentialJoint {
        order: order.iter().map(|s| s.to_string()).collect(),
        shape,
        weights,
    })
}

fn branch(
    ops: &[&InterventionOp],
    state: &SharedState,
    mass: f64,
    depth: usize,
    shape: &[usize],
    prefix: &mut Vec<usize>,
    out: &mut [f64],
) -> Result<()> {
    if depth == ops.len() {
        out[encode_outcome(shape, prefix)] += mass;
        return Ok(());
    }
    let applied = apply(ops[depth], state)?;
    for (k, (p, post)) in applied
        .outcome_probabilities
        .iter()
        .zip(&applied.branches)
        .enumerate()
    {
        if let Some(post) = post {
            prefix.push(k);
            branch(ops, post, mass * p, depth + 1, shape, prefix, out)?;
            prefix.pop();
        }
    }
    Ok(())
}

/// Max-abs-entry norm of the commutator of the two actions and of every
/// pair of branch maps; zero iff all of them commute.
pub fn commutator_norm(a: &InterventionOp, b: &InterventionOp) -> Result<f64> {
    if a.kind() != b.kind() || a.dimension() != b.dimension() {
        return Err(Error::DimensionMismatch(format!("ops `{}` and `{}` are incompatible", a.id(), b.id())));
    }
    let comm = |x: &DMatrix<Complex64>, y: &DMatrix<Complex64>| max_abs(&(x * y - y * x), |z| z.norm());
    let mut norm = comm(&a.action_complex(), &b.action_complex());
    for ka in a.branch_maps() {
        for kb in b.branch_maps() {
            norm = norm.max(comm(&ka, &kb));
        }
    }
    Ok(norm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderEffectReport {
    pub first: String,
    pub second: String,
    /// Total variation between the two orders, tuples aligned as (outcome of first, outcome of second).
    pub tv: f64,
    /// `[P_ab(0,1) + P_ab(1,0)] - [P_ba(0,1) + P_ba(1,0)]` for two binary questions.
    pub qq: Option<f64>,
    /// Second-question distributions conditioned on a first answer of outcome 0, per order.
    pub conditioned_on_first: Option<[Vec<f64>; 2]>,
    pub joint_ab: Vec<f64>,
    /// BA statistics re-indexed to (outcome of first, outcome of second).
    pub joint_ba_aligned: Vec<f64>,
}

pub fn order_effect_report(m: &InterventionModel, a: &str, b: &str) -> Result<OrderEffectReport> {
    let ab = sequential_stats(m, &[a, b])?;
    let ba = sequential_stats(m, &[b, a])?;
    let (na, nb) = (ab.shape[0], ab.shape[1]);
    let mut aligned = vec![0.0; na * nb];
    for i in 0..na {
        for j in 0..nb {
            aligned[i * nb + j] = ba.get(&[j, i]);
        }
    }
    let tv = 0.5
        * ab.weights
            .iter()
            .zip(&aligned)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>();
    let qq = (na == 2 && nb == 2)
        .then(|| (ab.weights[1] + ab.weights[2]) - (aligned[1] + aligned[2]));
    let cond = |joint: &SequentialJoint| -> Vec<f64> {
        let n = joint.shape[1];
        let row: Vec<f64> = (0..n).map(|j| joint.get(&[0, j])).collect();
        let total: f64 = row.iter().sum();
        if total > 0.0 { row.iter().map(|x| x / total).collect() } else { vec![0.0; n] }
    };
    Ok(OrderEffectReport {
        first: a.to_string(),
        second: b.to_string(),
        tv: tv.min(1.0),
        qq,
        conditioned_on_first: Some([cond(&ab), cond(&ba)]),
        joint_ab: ab.weights,
        joint_ba_aligned: aligned,
    })
}

/// Total variation between the AB and BA sequential statistics.
pub fn order_effect(m: &InterventionModel, a: &str, b: &str) -> Result<f64> {
    Ok(order_effect_report(m, a, b)?.tv)
}

/// `I(X;C)` in bits for a user-supplied joint over state index (rows) and context (columns).
pub fn check_single_state(joint_xc: &[Vec<f64>]) -> Result<f64> {
    mutual_information(joint_xc)
}

// ----- file format -----

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OpFile {
    #[serde(default)]
    pub matrix: Option<Value>,
    #[serde(default)]
    pub projectors: Option<Vec<Value>>,
    #[serde(default)]
    pub outcomes: Option<Vec<Vec<usize>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: StateKind,
    pub dimension: usize,
    pub initial: Value,
    pub ops: BTreeMap<String, OpFile>,
    #[serde(default)]
    pub context_prior: Option<BTreeMap<String, f64>>,
}

pub(crate) fn parse_complex(v: &Value, path: &str) -> Result<Complex64> {
    match v {
        Value::Number(n) => Ok(Complex64::new(n.as_f64().unwrap_or(f64::NAN), 0.0)),
        Value::Array(parts) if parts.len() == 2 => {
            let re = parts[0].as_f64();
            let im = parts[1].as_f64();
            match (re, im) {
                (Some(re), Some(im)) => Ok(Complex64::new(re, im)),
                _ => Err(Error::schema(path, "expected [re, im] numbers")),
            }
        }
        _ => Err(Error::schema(path, "expected a number or [re, im]")),
    }
}

pub(crate) fn parse_complex_vector(v: &Value, dim: usize, path: &str) -> Result<Vec<Complex64>> {
    let items = v.as_array().ok_or_else(|| Error::schema(path, "expected a list"))?;
    if items.len() != dim {
        return Err(Error::schema(path, format!("expected {dim} entries, found {}", items.len())));
    }
    items
        .iter()
        .enumerate()
        .map(|(i, x)| parse_complex(x, &format!("{path}[{i}]")))
        .collect()
}

pub(crate) fn parse_complex_matrix(v: &Value, dim: usize, path: &str) -> Result<DMatrix<Complex64>> {
    let rows = v.as_array().ok_or_else(|| Error::schema(path, "expected a list of rows"))?;
    if rows.len() != dim {
        return Err(Error::schema(path, format!("expected {dim} rows, found {}", rows.len())));
    }
    let mut m = DMatrix::zeros(dim, dim);
    for (i, row) in rows.iter().enumerate() {
        let entries = parse_complex_vector(row, dim, &format!("{path}[{i}]"))?;
        for (j, z) in entries.into_iter().enumerate() {
            m[(i, j)] = z;
        }
    }
    Ok(m)
}

fn parse_real_matrix(v: &Value, dim: usize, path: &str) -> Result<DMatrix<f64>> {
    let m = parse_complex_matrix(v, dim, path)?;
    if m.iter().any(|z| z.im != 0.0) {
        return Err(Error::schema(path, "stochastic matrices must be real"));
    }
    Ok(m.map(|z| z.re))
}

pub(crate) fn op_from_file(id: &str, f: &OpFile, kind: StateKind, dim: usize) -> Result<InterventionOp> {
    let path = format!("ops.{id}");
    match kind {
        StateKind::Stochastic => {
            let matrix = f
                .matrix
                .as_ref()
                .ok_or_else(|| Error::schema(format!("{path}.matrix"), "missing"))?;
            let action = parse_real_matrix(matrix, dim, &format!("{path}.matrix"))?;
            InterventionOp::stochastic(id, action, f.outcomes.clone())
        }
        StateKind::Amplitude => {
            let action = match &f.matrix {
                Some(m) => parse_complex_matrix(m, dim, &format!("{path}.matrix"))?,
                None => DMatrix::identity(dim, dim),
            };
            let projectors = f
                .projectors
                .as_ref()
                .ok_or_else(|| Error::schema(format!("{path}.projectors"), "missing"))?
                .iter()
                .enumerate()
                .map(|(i, p)| parse_complex_matrix(p, dim, &format!("{path}.projectors[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            InterventionOp::amplitude(id, action, projectors)
        }
    }
}

pub(crate) fn state_from_value(v: &Value, kind: StateKind, dim: usize, path: &str) -> Result<SharedState> {
    let entries = parse_complex_vector(v, dim, path)?;
    match kind {
        StateKind::Stochastic => {
            if entries.iter().any(|z| z.im != 0.0) {
                return Err(Error::schema(path, "stochastic state must be real"));
            }
            SharedState::stochastic(entries.iter().map(|z| z.re).collect())
        }
        StateKind::Amplitude => SharedState::amplitude(entries),
    }
}

impl ModelFile {
    pub fn into_model(self) -> Result<InterventionModel> {
        let initial = state_from_value(&self.initial, self.kind, self.dimension, "initial")?;
        let ops = self
            .ops
            .iter()
            .map(|(id, f)| Ok((id.clone(), op_from_file(id, f, self.kind, self.dimension)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        InterventionModel::new(initial, ops, self.context_prior)
    }
}

pub fn parse_model(json: &str) -> Result<InterventionModel> {
    let file: ModelFile = serde_json::from_str(json)?;
    file.into_model()
}

/// Rank-one projector onto a (not necessarily normalized) vector.
pub fn rank_one_projector(v: &[Complex64]) -> DMatrix<Complex64> {
    let v = DVector::from_column_slice(v);
    let v = v.unscale(v.norm());
    &v * v.adjoint()
}

/// Projectors onto the real orthonormal basis rotated by `angle` (Hilbert-space radians).
pub fn rotated_qubit_basis(angle: f64) -> Vec<DMatrix<Complex64>> {
    let (s, c) = angle.sin_cos();
    vec![
        rank_one_projector(&[Complex64::new(c, 0.0), Complex64::new(s, 0.0)]),
        rank_one_projector(&[Complex64::new(-s, 0.0), Complex64::new(c, 0.0)]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn qubit(v: [f64; 2]) -> SharedState {
        SharedState::amplitude(vec![c(v[0]), c(v[1])]).unwrap()
    }

    fn question(id: &str, angle: f64) -> InterventionOp {
        InterventionOp::amplitude(id, DMatrix::identity(2, 2), rotated_qubit_basis(angle)).unwrap()
    }

    fn model(ops: Vec<InterventionOp>, initial: SharedState) -> InterventionModel {
        InterventionModel::new(initial, ops.into_iter().map(|o| (o.id().to_string(), o)).collect(), None).unwrap()
    }

    #[test]
    fn identity_op_leaves_state() {
        let x = qubit([0.6, 0.8]);
        let op = question("I", 0.0);
        let out = apply(&op, &x).unwrap();
        assert_eq!(out.state, x);
        assert!((out.outcome_probabilities[0] - 0.36).abs() < 1e-12);
        assert!((out.outcome_probabilities[1] - 0.64).abs() < 1e-12);
    }

    #[test]
    fn permutation_moves_basis_state() {
        let perm = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let op = InterventionOp::stochastic("P", perm, None).unwrap();
        let x = SharedState::stochastic(vec![1.0, 0.0, 0.0]).unwrap();
        let out = apply(&op, &x).unwrap();
        assert_eq!(out.state, SharedState::Stochastic(DVector::from_vec(vec![0.0, 1.0, 0.0])));
        assert_eq!(out.outcome_probabilities, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn rotated_question_on_ground_state() {
        // unitary rotation by 22.5 degrees followed by a computational-basis question
        let t = PI / 8.0;
        let rot = DMatrix::from_row_slice(2, 2, &[c(t.cos()), c(-t.sin()), c(t.sin()), c(t.cos())]);
        let op = InterventionOp::amplitude("R", rot, rotated_qubit_basis(0.0)).unwrap();
        let out = apply(&op, &qubit([1.0, 0.0])).unwrap();
        assert!((out.outcome_probabilities[0] - t.cos().powi(2)).abs() < 1e-12);
        assert!((out.outcome_probabilities[1] - t.sin().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn sequential_single_and_commuting() {
        let x = SharedState::stochastic(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let eye = DMatrix::identity(4, 4);
        let a = InterventionOp::stochastic("a", eye.clone(), Some(vec![vec![0, 1], vec![2, 3]])).unwrap();
        let b = InterventionOp::stochastic("b", eye, Some(vec![vec![0, 2], vec![1, 3]])).unwrap();
        let m = model(vec![a, b], x);
        let single = sequential_stats(&m, &["a"]).unwrap();
        assert!((single.weights[0] - 0.3).abs() < 1e-12);
        let r = order_effect_report(&m, "a", "b").unwrap();
        assert!(r.tv < 1e-12);
        assert!(commutator_norm(m.op("a").unwrap(), m.op("b").unwrap()).unwrap() < 1e-12);
    }

    /// Explicit branch products for two real qubit questions.
    fn brute_joint(psi: [f64; 2], first: f64, second: f64) -> Vec<f64> {
        let basis = |t: f64| [[t.cos(), t.sin()], [-t.sin(), t.cos()]];
        let (f, s) = (basis(first), basis(second));
        let mut out = Vec::new();
        for vf in f {
            for vs in s {
                let amp1 = vf[0] * psi[0] + vf[1] * psi[1];
                let amp2 = vs[0] * vf[0] + vs[1] * vf[1];
                out.push((amp1 * amp2).powi(2));
            }
        }
        out
    }

    #[test]
    fn forty_five_degree_pair_has_order_effect() {
        let psi = [(0.3f64).cos(), (0.3f64).sin()];
        let m = model(vec![question("A", 0.0), question("B", PI / 8.0)], qubit(psi));
        let ab = sequential_stats(&m, &["A", "B"]).unwrap();
        let ba = sequential_stats(&m, &["B", "A"]).unwrap();
        let ab_brute = brute_joint(psi, 0.0, PI / 8.0);
        let ba_brute = brute_joint(psi, PI / 8.0, 0.0);
        for k in 0..4 {
            assert!((ab.weights[k] - ab_brute[k]).abs() < 1e-12);
            assert!((ba.weights[k] - ba_brute[k]).abs() < 1e-12);
        }
        assert_ne!(ab.weights, ba.weights);
        let mut tv = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                tv += (ab_brute[2 * i + j] - ba_brute[2 * j + i]).abs();
            }
        }
        let tv = tv / 2.0;
        let got = order_effect(&m, "A", "B").unwrap();
        assert!((got - tv).abs() < 1e-9);
        assert!(got > 0.01);
    }

    #[test]
    fn pauli_commutator() {
        let x = DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let z = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]);
        let eye = vec![DMatrix::identity(2, 2)];
        let ox = InterventionOp::amplitude("X", x, eye.clone()).unwrap();
        let oz = InterventionOp::amplitude("Z", z, eye).unwrap();
        assert!((commutator_norm(&ox, &oz).unwrap() - 2.0).abs() < 1e-12);
        assert!(commutator_norm(&ox, &ox).unwrap() < 1e-12);
        let diag = |id: &str, a: f64| {
            let d = DMatrix::from_row_slice(2, 2, &[Complex64::from_polar(1.0, a), c(0.0), c(0.0), c(1.0)]);
            InterventionOp::amplitude(id, d, rotated_qubit_basis(0.0)).unwrap()
        };
        assert!(commutator_norm(&diag("d1", 0.4), &diag("d2", 1.1)).unwrap() < 1e-12);
        let s = InterventionOp::stochastic("s", DMatrix::identity(2, 2), None).unwrap();
        assert!(commutator_norm(&ox, &s).is_err());
    }

    #[test]
    fn branching_consistency() {
        let m = model(vec![question("A", 0.2), question("B", 1.0)], qubit([0.6, 0.8]));
        let ab = sequential_stats(&m, &["A", "B"]).unwrap();
        let direct = apply(m.op("A").unwrap(), &m.initial).unwrap().outcome_probabilities;
        for (x, y) in ab.prefix_marginal(1).iter().zip(&direct) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_errors() {
        let bad_cols = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.6, 0.5]);
        assert!(InterventionOp::stochastic("s", bad_cols, None).is_err());
        let eye = DMatrix::<f64>::identity(2, 2);
        assert!(InterventionOp::stochastic("s", eye, Some(vec![vec![0]])).is_err());
        let not_unitary = DMatrix::from_row_slice(2, 2, &[c(1.0), c(1.0), c(0.0), c(1.0)]);
        assert!(InterventionOp::amplitude("u", not_unitary, rotated_qubit_basis(0.0)).is_err());
        let mut incomplete = rotated_qubit_basis(0.0);
        incomplete.pop();
        assert!(InterventionOp::amplitude("u", DMatrix::identity(2, 2), incomplete).is_err());
        let overlapping = vec![rotated_qubit_basis(0.0)[0].clone(), rotated_qubit_basis(0.3)[1].clone()];
        assert!(InterventionOp::amplitude("u", DMatrix::identity(2, 2), overlapping).is_err());
        assert!(SharedState::amplitude(vec![c(1.0), c(1.0)]).is_err());
        assert!(SharedState::stochastic(vec![0.5, 0.6]).is_err());
        let x = SharedState::stochastic(vec![0.5, 0.5]).unwrap();
        assert!(apply(&question("A", 0.0), &x).is_err());
    }

    #[test]
    fn single_state_examples() {
        assert!(check_single_state(&[vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap().abs() < 1e-12);
        assert!((check_single_state(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap() - 1.0).abs() < 1e-12);
        // direct double sum
        let joint = [vec![0.3, 0.2], vec![0.2, 0.3]];
        let mut direct = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let p: f64 = joint[i][j];
                direct += p * (p / (0.5 * 0.5)).log2();
            }
        }
        assert!((check_single_state(&joint).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn model_file_parses() {
        let json = r#"{
            "kind": "amplitude", "dimension": 2,
            "initial": [[0.6, 0], [0, 0.8]],
            "ops": {
                "A": {"projectors": [[[1,0],[0,0]], [[0,0],[0,1]]]},
                "B": {"matrix": [[0,1],[1,0]], "projectors": [[[1,0],[0,0]], [[0,0],[0,1]]]}
            }
        }"#;
        let m = parse_model(json).unwrap();
        let ab = sequential_stats(&m, &["A", "B"]).unwrap();
        assert!((ab.get(&[0, 1]) - 0.36).abs() < 1e-12);
        assert!((ab.get(&[1, 0]) - 0.64).abs() < 1e-12);
        assert!(matches!(sequential_stats(&m, &["A", "Z"]), Err(Error::UnknownContext(_))));
        let bad = json.replace("[0, 0.8]", "[0, 0.9]");
        assert!(parse_model(&bad).is_err());
    }

    fn unitary(t: f64, b: f64, g: f64) -> DMatrix<Complex64> {
        let e = |x: f64| Complex64::from_polar(1.0, x);
        DMatrix::from_row_slice(
            2,
            2,
            &[e(b) * t.cos(), e(g) * t.sin(), -e(-g) * t.sin(), e(-b) * t.cos()],
        )
    }

    fn random_qubit(t: f64, p: f64) -> SharedState {
        SharedState::amplitude(vec![c(t.cos()), Complex64::from_polar(t.sin(), p)]).unwrap()
    }

    proptest! {
        #[test]
        fn commuting_ops_have_no_order_effect(t in 0.0f64..PI, p in 0.0f64..6.3, a1 in 0.0f64..6.3, a2 in 0.0f64..6.3, basis in 0.0f64..PI) {
            let diag = |a: f64| DMatrix::from_row_slice(2, 2, &[Complex64::from_polar(1.0, a), c(0.0), c(0.0), c(1.0)]);
            let x = InterventionOp::amplitude("x", diag(a1), rotated_qubit_basis(0.0)).unwrap();
            let y = InterventionOp::amplitude("y", diag(a2), rotated_qubit_basis(0.0)).unwrap();
            let u = InterventionOp::amplitude("u", DMatrix::identity(2, 2), rotated_qubit_basis(basis)).unwrap();
            let v = InterventionOp::amplitude("v", DMatrix::identity(2, 2), rotated_qubit_basis(basis)).unwrap();
            let m = model(vec![x, y, u, v], random_qubit(t, p));
            for (a, b) in [("x", "y"), ("u", "v")] {
                prop_assert!(commutator_norm(m.op(a).unwrap(), m.op(b).unwrap()).unwrap() <= 1e-12);
                prop_assert!(order_effect(&m, a, b).unwrap() <= 1e-9);
            }
        }

        #[test]
        fn sequential_joints_are_distributions(t in 0.0f64..PI, p in 0.0f64..6.3, r in proptest::collection::vec(0.0f64..6.3, 9)) {
            let ops = (0..3)
                .map(|k| InterventionOp::amplitude(format!("q{k}"), unitary(r[3 * k], r[3 * k + 1], r[3 * k + 2]), rotated_qubit_basis(r[k])).unwrap())
                .collect();
            let m = model(ops, random_qubit(t, p));
            let j = sequential_stats(&m, &["q0", "q1", "q2"]).unwrap();
            prop_assert!(j.weights.iter().all(|&w| w >= 0.0));
            prop_assert!((j.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let first = apply(m.op("q0").unwrap(), &m.initial).unwrap().outcome_probabilities;
            for (x, y) in j.prefix_marginal(1).iter().zip(&first) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn long_chains_keep_normalization() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut x = random_qubit(0.4, 1.0);
        let mut s = SharedState::stochastic(vec![0.2, 0.3, 0.5]).unwrap();
        for _ in 0..1000 {
            let op = InterventionOp::amplitude(
                "u",
                unitary(rng.random::<f64>() * PI, rng.random::<f64>() * 6.0, rng.random::<f64>() * 6.0),
                rotated_qubit_basis(rng.random::<f64>() * PI),
            )
            .unwrap();
            let out = apply(&op, &x).unwrap();
            let k = usize::from(out.outcome_probabilities[0] < rng.random::<f64>());
            x = out.branches[k].clone().or(out.branches[1 - k].clone()).unwrap();
            assert!(x.normalization_error() <= 1e-9);

            let mut cols = Vec::new();
            for _ in 0..3 {
                let raw: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 1e-3).collect();
                let total: f64 = raw.iter().sum();
                cols.extend(raw.into_iter().map(|v| v / total));
            }
            let t = InterventionOp::stochastic("t", DMatrix::from_column_slice(3, 3, &cols), None).unwrap();
            s = apply(&t, &s).unwrap().state;
            assert!(s.normalization_error() <= 1e-9);
        }
    }
}
