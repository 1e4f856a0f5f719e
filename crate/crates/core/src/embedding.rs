//! Global Boolean embedding: does a behavior arise as the marginals of one
//! joint distribution over all observables?
//!
//! The check is a linear feasibility problem over the deterministic global
//! assignments. A positive answer comes with the joint; a negative one with
//! a linear functional whose value on the behavior exceeds its maximum over
//! every global assignment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{ExactHullOracle, ExactMembership};
use crate::hull::{HullProblem, Witness};
use crate::scenario::{check_no_disturbance, decode_outcome, encode_outcome, Behavior, Scenario};

/// Default cap on the number of global assignments.
pub const DEFAULT_ASSIGNMENT_CAP: u128 = 1 << 20;

/// Distances below `tol * NOISE_FRACTION` count as solver noise.
pub(crate) const NOISE_FRACTION: f64 = 1e-3;

/// One outcome index per observable, in the scenario's observable order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GlobalAssignment {
    pub values: Vec<usize>,
}

impl GlobalAssignment {
    pub fn as_map(&self, s: &Scenario) -> BTreeMap<String, usize> {
        s.observables
            .iter()
            .zip(&self.values)
            .map(|(o, &v)| (o.id.clone(), v))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingStatus {
    Embeddable,
    NonEmbeddable,
    Marginal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointEntry {
    pub assignment: BTreeMap<String, usize>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingWitness {
    /// `lp` for a hull-separating functional, `disturbance` when shared marginals differ.
    pub kind: String,
    /// Coefficient per cell, keyed by context id, in table order.
    pub coefficients: BTreeMap<String, Vec<f64>>,
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCertificate {
    pub status: EmbeddingStatus,
    /// Signed feasibility margin: interior depth (>= 0) when inside the
    /// assignment hull, minus the separation distance outside it.
    pub margin: f64,
    pub joint: Option<Vec<JointEntry>>,
    pub witness: Option<EmbeddingWitness>,
    /// Max absolute gap between the joint's marginals and the tables.
    pub reproduction_residual: Option<f64>,
    pub disturbance_residual: f64,
    pub tol: f64,
}

/// All global assignments in lexicographic order (last observable fastest).
pub fn enumerate_global_assignments(s: &Scenario, cap: u128) -> Result<Vec<GlobalAssignment>> {
    s.ensure_valid()?;
    let shape: Vec<usize> = s.observables.iter().map(|o| o.arity).collect();
    let total = shape
        .iter()
        .try_fold(1u128, |acc, &a| acc.checked_mul(a as u128))
        .unwrap_or(u128::MAX);
    if total > cap {
        return Err(Error::CapExceeded {
            what: "global assignments".into(),
            size: total,
            cap,
        });
    }
    Ok((0..total as usize)
        .map(|g| GlobalAssignment {
            values: decode_outcome(&shape, g),
        })
        .collect())
}

/// The assignment polytope: one vertex per global assignment, one block per context.
pub fn assignment_hull(s: &Scenario, cap: u128) -> Result<(Vec<GlobalAssignment>, HullProblem)> {
    let assignments = enumerate_global_assignments(s, cap)?;
    let offsets = s.cell_offsets();
    let members: Vec<Vec<usize>> = (0..s.contexts.len()).map(|c| s.context_members(c)).collect();
    let shapes: Vec<Vec<usize>> = (0..s.contexts.len()).map(|c| s.context_shape(c)).collect();
    let vertices = assignments
        .iter()
        .map(|g| {
            (0..s.contexts.len())
                .map(|c| {
                    let local: Vec<usize> = members[c].iter().map(|&m| g.values[m]).collect();
                    offsets[c] + encode_outcome(&shapes[c], &local)
                })
                .collect()
        })
        .collect();
    let blocks = (0..s.contexts.len()).map(|c| s.context_size(c)).collect();
    Ok((assignments, HullProblem::new(blocks, vertices)?))
}

fn split_cells(s: &Scenario, flat: &[f64]) -> BTreeMap<String, Vec<f64>> {
    let offsets = s.cell_offsets();
    s.contexts
        .iter()
        .enumerate()
        .map(|(c, ctx)| {
            let start = offsets[c];
            (ctx.id.clone(), flat[start..start + s.context_size(c)].to_vec())
        })
        .collect()
}

fn lp_witness(s: &Scenario, w: &Witness) -> EmbeddingWitness {
    EmbeddingWitness {
        kind: "lp".into(),
        coefficients: split_cells(s, &w.coefficients),
        value: w.value,
        bound: w.bound,
        margin: w.margin,
    }
}

/// Functional `P_a(shared = o) - P_b(shared = o)`, zero on every global assignment.
fn disturbance_witness(b: &Behavior, tol: f64) -> Option<EmbeddingWitness> {
    let report = check_no_disturbance(b, tol);
    let worst = report.worst()?.clone();
    let s = b.scenario();
    let mut coefficients: BTreeMap<String, Vec<f64>> = s
        .contexts
        .iter()
        .enumerate()
        .map(|(c, ctx)| (ctx.id.clone(), vec![0.0; s.context_size(c)]))
        .collect();
    let ca = s.context_index(&worst.context_a).ok()?;
    let cb = s.context_index(&worst.context_b).ok()?;
    let mut value = 0.0;
    for (c, sign) in [(ca, 1.0), (cb, -1.0)] {
        let ctx = &s.contexts[c];
        let pos: Vec<usize> = worst
            .shared
            .iter()
            .map(|o| ctx.observables.iter().position(|x| x == o).unwrap())
            .collect();
        let shape = s.context_shape(c);
        let coeffs = coefficients.get_mut(&ctx.id).unwrap();
        for (i, coeff) in coeffs.iter_mut().enumerate() {
            let full = decode_outcome(&shape, i);
            if pos.iter().zip(&worst.outcome).all(|(&p, &o)| full[p] == o) {
                *coeff = sign;
                value += sign * b.tables()[c][i];
            }
        }
    }
    if value < 0.0 {
        value = -value;
        for v in coefficients.values_mut() {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
    Some(EmbeddingWitness {
        kind: "disturbance".into(),
        coefficients,
        value,
        bound: 0.0,
        margin: value,
    })
}

fn joint_entries(s: &Scenario, assignments: &[GlobalAssignment], weights: &[f64]) -> Vec<JointEntry> {
    assignments
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(g, &w)| JointEntry {
            assignment: g.as_map(s),
            weight: w,
        })
        .collect()
}

/// Linear-feasibility test for a global joint distribution.
pub fn check_boolean_embedding(b: &Behavior, tol: f64) -> Result<EmbeddingCertificate> {
    check_boolean_embedding_capped(b, tol, DEFAULT_ASSIGNMENT_CAP)
}

pub fn check_boolean_embedding_capped(b: &Behavior, tol: f64, cap: u128) -> Result<EmbeddingCertificate> {
    let s = b.scenario();
    let disturbance = check_no_disturbance(b, tol);
    if !disturbance.pass {
        let witness = disturbance_witness(b, tol);
        return Ok(EmbeddingCertificate {
            status: EmbeddingStatus::NonEmbeddable,
            margin: -disturbance.max_residual,
            joint: None,
            witness,
            reproduction_residual: None,
            disturbance_residual: disturbance.max_residual,
            tol,
        });
    }
    let (assignments, hull) = assignment_hull(s, cap)?;
    let cells = b.cells();
    let projection = hull.project(&cells)?;
    let residual = hull.reproduction_residual(&projection.weights, &cells);
    let noise = tol * NOISE_FRACTION;
    let cert = if projection.distance > tol && projection.witness.margin > tol {
        EmbeddingCertificate {
            status: EmbeddingStatus::NonEmbeddable,
            margin: -projection.witness.margin,
            joint: None,
            witness: Some(lp_witness(s, &projection.witness)),
            reproduction_residual: None,
            disturbance_residual: disturbance.max_residual,
            tol,
        }
    } else if projection.distance <= noise && residual <= tol {
        EmbeddingCertificate {
            status: EmbeddingStatus::Embeddable,
            margin: hull.depth(&cells)?.max(0.0),
            joint: Some(joint_entries(s, &assignments, &projection.weights)),
            witness: None,
            reproduction_residual: Some(residual),
            disturbance_residual: disturbance.max_residual,
            tol,
        }
    } else {
        // within tol of the boundary on the outside: report both candidates
        EmbeddingCertificate {
            status: EmbeddingStatus::Marginal,
            margin: -projection.distance,
            joint: Some(joint_entries(s, &assignments, &projection.weights)),
            witness: Some(lp_witness(s, &projection.witness)),
            reproduction_residual: Some(residual),
            disturbance_residual: disturbance.max_residual,
            tol,
        }
    };
    Ok(cert)
}

/// Exact-rational hull membership by basic-solution enumeration. Test oracle
/// for [`check_boolean_embedding`]; limited to 16 assignments and 64 cells.
pub fn deterministic_hull_membership(b: &Behavior) -> Result<ExactMembership> {
    let (_, hull) = assignment_hull(b.scenario(), crate::exact::MAX_VERTICES as u128)?;
    ExactHullOracle::new(&hull)?.membership(&b.cells())
}
