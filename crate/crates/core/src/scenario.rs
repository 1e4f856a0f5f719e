//! Measurement scenarios, behaviors and the no-disturbance gate.
//!
//! A [`Scenario`] lists observables (each with a finite number of outcomes)
//! and contexts (ordered lists of jointly measured observables). A
//! [`Behavior`] attaches one outcome table to every context.
//!
//! Tables are indexed row-major over the context's observable order with the
//! last observable varying fastest: for a context `[X, Y]` with binary
//! outcomes the table is `(x0y0, x0y1, x1y0, x1y1)`.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance used wherever a caller does not supply one.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observable {
    pub id: String,
    pub arity: usize,
}

impl Observable {
    pub fn new(id: impl Into<String>, arity: usize) -> Self {
        Observable {
            id: id.into(),
            arity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub id: String,
    pub observables: Vec<String>,
}

impl Context {
    pub fn new<S: Into<String>>(id: impl Into<String>, observables: impl IntoIterator<Item = S>) -> Self {
        Context {
            id: id.into(),
            observables: observables.into_iter().map(Into::into).collect(),
        }
    }
}

/// Observables plus the contexts in which they can be jointly measured.
///
/// The fields are public so malformed scenarios can be built and passed to
/// [`validate_scenario`]; every analysis entry point goes through
/// [`Scenario::new`] or [`Behavior::new`], which reject invalid input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub observables: Vec<Observable>,
    pub contexts: Vec<Context>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            location: location.into(),
            message: message.into(),
        });
    }
}

/// Lists every violated scenario invariant. An empty report means valid.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = HashSet::new();
    for (i, obs) in s.observables.iter().enumerate() {
        let loc = format!("observables[{i}]");
        if obs.id.is_empty() {
            report.push(&loc, "empty observable id");
        }
        if obs.arity < 2 {
            report.push(&loc, format!("observable `{}` has arity {} (< 2)", obs.id, obs.arity));
        }
        if !seen.insert(obs.id.as_str()) {
            report.push(&loc, format!("duplicate observable id `{}`", obs.id));
        }
    }
    if s.contexts.is_empty() {
        report.push("contexts", "scenario has no contexts");
    }
    let mut seen_ctx = HashSet::new();
    for (i, ctx) in s.contexts.iter().enumerate() {
        let loc = format!("contexts[{i}]");
        if !seen_ctx.insert(ctx.id.as_str()) {
            report.push(&loc, format!("duplicate context id `{}`", ctx.id));
        }
        if ctx.observables.is_empty() {
            report.push(&loc, format!("context `{}` is empty", ctx.id));
        }
        let mut in_ctx = HashSet::new();
        for (j, oid) in ctx.observables.iter().enumerate() {
            let oloc = format!("{loc}.observables[{j}]");
            if !in_ctx.insert(oid.as_str()) {
                report.push(&oloc, format!("observable `{oid}` repeated in context `{}`", ctx.id));
            }
            if !seen.contains(oid.as_str()) {
                report.push(&oloc, format!("context `{}` references unknown observable `{oid}`", ctx.id));
            }
        }
    }
    report
}

impl Scenario {
    pub fn new(observables: Vec<Observable>, contexts: Vec<Context>) -> Result<Self> {
        let s = Scenario {
            observables,
            contexts,
        };
        s.ensure_valid()?;
        Ok(s)
    }

    pub(crate) fn ensure_valid(&self) -> Result<()> {
        let report = validate_scenario(self);
        if report.is_valid() {
            Ok(())
        } else {
            let msg = report
                .violations
                .iter()
                .map(|v| format!("{}: {}", v.location, v.message))
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::InvalidScenario(msg))
        }
    }

    pub fn observable_index(&self, id: &str) -> Result<usize> {
        self.observables
            .iter()
            .position(|o| o.id == id)
            .ok_or_else(|| Error::UnknownObservable(id.to_string()))
    }

    pub fn context_index(&self, id: &str) -> Result<usize> {
        self.contexts
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| Error::UnknownContext(id.to_string()))
    }

    /// Observable indices of a context, in the context's declared order.
    pub fn context_members(&self, ctx: usize) -> Vec<usize> {
        self.contexts[ctx]
            .observables
            .iter()
            .map(|id| self.observable_index(id).expect("validated scenario"))
            .collect()
    }

    /// Arities of a context's observables, in declared order.
    pub fn context_shape(&self, ctx: usize) -> Vec<usize> {
        self.context_members(ctx)
            .into_iter()
            .map(|i| self.observables[i].arity)
            .collect()
    }

    /// Number of joint outcomes of a context.
    pub fn context_size(&self, ctx: usize) -> usize {
        self.context_shape(ctx).iter().product()
    }

    /// Total number of outcome cells over all contexts.
    pub fn cell_count(&self) -> usize {
        (0..self.contexts.len()).map(|c| self.context_size(c)).sum()
    }

    /// Offset of each context's first cell in the concatenated cell vector.
    pub fn cell_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.contexts.len());
        let mut acc = 0;
        for c in 0..self.contexts.len() {
            offsets.push(acc);
            acc += self.context_size(c);
        }
        offsets
    }
}

/// Row-major index of a joint outcome, last position fastest.
pub fn encode_outcome(shape: &[usize], outcome: &[usize]) -> usize {
    debug_assert_eq!(shape.len(), outcome.len());
    shape
        .iter()
        .zip(outcome)
        .fold(0, |acc, (&n, &o)| acc * n + o)
}

/// Inverse of [`encode_outcome`].
pub fn decode_outcome(shape: &[usize], mut index: usize) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    for (slot, &n) in out.iter_mut().zip(shape).rev() {
        *slot = index % n;
        index /= n;
    }
    out
}

/// A normalized, non-negative weight vector.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Distribution {
    weights: Vec<f64>,
}

impl Distribution {
    /// Checks non-negativity and normalization within `tol`.
    pub fn new(weights: Vec<f64>, tol: f64) -> Result<Self> {
        Self::check(&weights, tol).map_err(|reason| Error::InvalidDistribution {
            location: "weights".into(),
            reason,
        })?;
        Ok(Distribution { weights })
    }

    pub(crate) fn check(weights: &[f64], tol: f64) -> Result<(), String> {
        if weights.is_empty() {
            return Err("empty weight vector".into());
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(format!("weight {i} is not finite"));
            }
            if w < 0.0 {
                return Err(format!("weight {i} is negative ({w})"));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(format!("weights sum to {total}, expected 1"));
        }
        Ok(())
    }

    pub fn uniform(n: usize) -> Self {
        Distribution {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn point(n: usize, at: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[at] = 1.0;
        Distribution { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.weights
    }
}

impl std::ops::Index<usize> for Distribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.weights[i]
    }
}

/// One outcome table per context of a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Behavior {
    scenario: Scenario,
    tables: Vec<Distribution>,
}

impl Behavior {
    /// `tables` are given in the scenario's context order.
    pub fn new(scenario: Scenario, tables: Vec<Distribution>) -> Result<Self> {
        scenario.ensure_valid()?;
        if tables.len() != scenario.contexts.len() {
            return Err(Error::InvalidScenario(format!(
                "{} tables for {} contexts",
                tables.len(),
                scenario.contexts.len()
            )));
        }
        for (c, t) in tables.iter().enumerate() {
            let expected = scenario.context_size(c);
            if t.len() != expected {
                return Err(Error::InvalidDistribution {
                    location: format!("tables.{}", scenario.contexts[c].id),
                    reason: format!("length {} but context has {} joint outcomes", t.len(), expected),
                });
            }
        }
        Ok(Behavior { scenario, tables })
    }

    pub fn from_map(scenario: Scenario, mut tables: HashMap<String, Distribution>) -> Result<Self> {
        let mut ordered = Vec::with_capacity(scenario.contexts.len());
        for ctx in &scenario.contexts {
            let t = tables.remove(&ctx.id).ok_or_else(|| Error::InvalidDistribution {
                location: format!("tables.{}", ctx.id),
                reason: "missing table".into(),
            })?;
            ordered.push(t);
        }
        if let Some(extra) = tables.keys().next() {
            return Err(Error::UnknownContext(extra.clone()));
        }
        Behavior::new(scenario, ordered)
    }

    /// Builds the behavior induced by a joint distribution over all
    /// observables, indexed row-major in the scenario's observable order.
    pub fn from_joint(scenario: Scenario, joint: &[f64]) -> Result<Self> {
        scenario.ensure_valid()?;
        let shape: Vec<usize> = scenario.observables.iter().map(|o| o.arity).collect();
        let total: usize = shape.iter().product();
        if joint.len() != total {
            return Err(Error::DimensionMismatch(format!(
                "joint has {} entries, scenario has {} global assignments",
                joint.len(),
                total
            )));
        }
        let mut tables = Vec::with_capacity(scenario.contexts.len());
        for c in 0..scenario.contexts.len() {
            let members = scenario.context_members(c);
            let cshape = scenario.context_shape(c);
            let mut t = vec![0.0; cshape.iter().product()];
            for (g, &w) in joint.iter().enumerate() {
                let global = decode_outcome(&shape, g);
                let local: Vec<usize> = members.iter().map(|&m| global[m]).collect();
                t[encode_outcome(&cshape, &local)] += w;
            }
            tables.push(Distribution::new(t, 1e-9)?);
        }
        Behavior::new(scenario, tables)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn tables(&self) -> &[Distribution] {
        &self.tables
    }

    pub fn table(&self, context_id: &str) -> Result<&Distribution> {
        Ok(&self.tables[self.scenario.context_index(context_id)?])
    }

    pub fn tables_by_id(&self) -> BTreeMap<String, Vec<f64>> {
        self.scenario
            .contexts
            .iter()
            .zip(&self.tables)
            .map(|(c, t)| (c.id.clone(), t.weights().to_vec()))
            .collect()
    }

    /// All table entries concatenated in context order.
    pub fn cells(&self) -> Vec<f64> {
        self.tables.iter().flat_map(|t| t.weights().iter().copied()).collect()
    }

    /// Convex combination `(1 - lambda) * self + lambda * other` on a shared scenario.
    pub fn mix(&self, other: &Behavior, lambda: f64) -> Result<Behavior> {
        if self.scenario != other.scenario {
            return Err(Error::DimensionMismatch("behaviors live on different scenarios".into()));
        }
        let tables = self
            .tables
            .iter()
            .zip(&other.tables)
            .map(|(a, b)| {
                let w = a
                    .weights()
                    .iter()
                    .zip(b.weights())
                    .map(|(x, y)| (1.0 - lambda) * x + lambda * y)
                    .collect();
                Distribution::new(w, 1e-9)
            })
            .collect::<Result<Vec<_>>>()?;
        Behavior::new(self.scenario.clone(), tables)
    }
}

/// Marginal of a context table onto `keep`, ordered as given in `keep`.
pub fn marginal(b: &Behavior, context_id: &str, keep: &[&str]) -> Result<Distribution> {
    let s = b.scenario();
    let c = s.context_index(context_id)?;
    if keep.is_empty() {
        return Err(Error::InvalidScenario("marginal over an empty observable set".into()));
    }
    let ctx = &s.contexts[c];
    let mut positions = Vec::with_capacity(keep.len());
    for &k in keep {
        let pos = ctx
            .observables
            .iter()
            .position(|o| o == k)
            .ok_or_else(|| Error::NotInContext {
                context: context_id.to_string(),
                observable: k.to_string(),
            })?;
        if positions.contains(&pos) {
            return Err(Error::InvalidScenario(format!("observable `{k}` listed twice in keep")));
        }
        positions.push(pos);
    }
    Ok(marginal_positions(&s.context_shape(c), b.tables()[c].weights(), &positions))
}

pub(crate) fn marginal_positions(shape: &[usize], table: &[f64], positions: &[usize]) -> Distribution {
    let out_shape: Vec<usize> = positions.iter().map(|&p| shape[p]).collect();
    let mut out = vec![0.0; out_shape.iter().product()];
    for (i, &w) in table.iter().enumerate() {
        let full = decode_outcome(shape, i);
        let kept: Vec<usize> = positions.iter().map(|&p| full[p]).collect();
        out[encode_outcome(&out_shape, &kept)] += w;
    }
    Distribution { weights: out }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceEntry {
    pub context_a: String,
    pub context_b: String,
    pub shared: Vec<String>,
    /// Joint outcome of the shared observables where the gap is largest.
    pub outcome: Vec<usize>,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceReport {
    pub pass: bool,
    pub max_residual: f64,
    pub tol: f64,
    pub entries: Vec<DisturbanceEntry>,
}

impl DisturbanceReport {
    pub fn worst(&self) -> Option<&DisturbanceEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.residual.total_cmp(&b.residual))
    }
}

/// Compares, for every pair of contexts that share observables, the two
/// marginals induced on the shared set.
pub fn check_no_disturbance(b: &Behavior, tol: f64) -> DisturbanceReport {
    let s = b.scenario();
    let mut entries = Vec::new();
    for i in 0..s.contexts.len() {
        for j in (i + 1)..s.contexts.len() {
            let shared: Vec<&String> = s.contexts[i]
                .observables
                .iter()
                .filter(|o| s.contexts[j].observables.contains(o))
                .collect();
            if shared.is_empty() {
                continue;
            }
            let pos_i: Vec<usize> = shared
                .iter()
                .map(|o| s.contexts[i].observables.iter().position(|x| x == *o).unwrap())
                .collect();
            let pos_j: Vec<usize> = shared
                .iter()
                .map(|o| s.contexts[j].observables.iter().position(|x| x == *o).unwrap())
                .collect();
            let mi = marginal_positions(&s.context_shape(i), b.tables()[i].weights(), &pos_i);
            let mj = marginal_positions(&s.context_shape(j), b.tables()[j].weights(), &pos_j);
            let (at, residual) = mi
                .weights()
                .iter()
                .zip(mj.weights())
                .map(|(x, y)| (x - y).abs())
                .enumerate()
                .fold((0, 0.0_f64), |best, (k, d)| if d > best.1 { (k, d) } else { best });
            let shared_shape: Vec<usize> = pos_i.iter().map(|&p| s.context_shape(i)[p]).collect();
            entries.push(DisturbanceEntry {
                context_a: s.contexts[i].id.clone(),
                context_b: s.contexts[j].id.clone(),
                shared: shared.into_iter().cloned().collect(),
                outcome: decode_outcome(&shared_shape, at),
                residual,
            });
        }
    }
    let max_residual = entries.iter().map(|e| e.residual).fold(0.0, f64::max);
    DisturbanceReport {
        pass: max_residual <= tol,
        max_residual,
        tol,
        entries,
    }
}
