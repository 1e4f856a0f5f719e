//! Two-branch gluing: realization weights, phased superposition and the
//! interference cross term.
//!
//! The branches `A` and `not A` contribute weights
//! `r_A = sqrt(P(A) P(B|A))` and `r_notA = sqrt(P(notA) P(B|notA))`. Transported
//! with a relative phase `theta`, the projected total is
//! `|r_A + r_notA e^{i theta}|^2 = LTP + 2 r_A r_notA cos(theta)`.
//! `theta = pi/2` reproduces the law of total probability.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{marginal, Behavior, DEFAULT_TOL};

/// Slack on `[0, 1]` before a projected total is flagged as out of range.
pub const RANGE_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchData {
    pub p_a: f64,
    pub p_b_given_a: f64,
    pub p_not_a: f64,
    pub p_b_given_not_a: f64,
}

impl BranchData {
    pub fn new(p_a: f64, p_b_given_a: f64, p_not_a: f64, p_b_given_not_a: f64) -> Result<Self> {
        let d = BranchData {
            p_a,
            p_b_given_a,
            p_not_a,
            p_b_given_not_a,
        };
        d.validate()?;
        Ok(d)
    }

    /// Branch data with `P(notA) = 1 - P(A)`.
    pub fn from_partition(p_a: f64, p_b_given_a: f64, p_b_given_not_a: f64) -> Result<Self> {
        Self::new(p_a, p_b_given_a, 1.0 - p_a, p_b_given_not_a)
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("p_a", self.p_a),
            ("p_b_given_a", self.p_b_given_a),
            ("p_not_a", self.p_not_a),
            ("p_b_given_not_a", self.p_b_given_not_a),
        ];
        for (name, v) in named {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidDistribution {
                    location: name.into(),
                    reason: format!("{v} is outside [0, 1]"),
                });
            }
        }
        if (self.p_a + self.p_not_a - 1.0).abs() > DEFAULT_TOL {
            return Err(Error::InvalidDistribution {
                location: "p_a + p_not_a".into(),
                reason: format!("sums to {}", self.p_a + self.p_not_a),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizationAmplitude {
    pub magnitude: f64,
    /// Radians in `[0, 2pi)`.
    pub phase: f64,
}

impl RealizationAmplitude {
    pub fn new(magnitude: f64, phase: f64) -> Self {
        RealizationAmplitude {
            magnitude: magnitude.max(0.0),
            phase: reduce_positive(phase),
        }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.phase)
    }
}

/// Relative gluing phase, stored reduced to `[0, 2pi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluingPhase {
    theta: f64,
}

impl GluingPhase {
    pub fn new(theta: f64) -> Self {
        GluingPhase {
            theta: reduce_positive(theta),
        }
    }

    /// The phase that makes the cross term vanish.
    pub fn flat() -> Self {
        GluingPhase::new(PI / 2.0)
    }

    pub fn radians(self) -> f64 {
        self.theta
    }
}

/// Reduces an angle to `[0, 2pi)`.
pub fn reduce_positive(theta: f64) -> f64 {
    if (0.0..TAU).contains(&theta) {
        return theta;
    }
    let r = theta.rem_euclid(TAU);
    if r >= TAU { 0.0 } else { r }
}

/// Reduces an angle to `(-pi, pi]`.
pub fn reduce_symmetric(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let r = reduce_positive(theta);
    if r > PI { r - TAU } else { r }
}

/// Classical law of total probability.
pub fn ltp_predict(d: &BranchData) -> f64 {
    d.p_a * d.p_b_given_a + d.p_not_a * d.p_b_given_not_a
}

pub fn realization_weights(d: &BranchData) -> (f64, f64) {
    ((d.p_a * d.p_b_given_a).sqrt(), (d.p_not_a * d.p_b_given_not_a).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projected {
    pub probability: f64,
    /// Set when the total leaves `[0, 1]` by more than [`RANGE_SLACK`].
    pub out_of_range: bool,
}

/// Squared norm of the glued contributions `r_A + r_notA e^{i theta}`. Not clamped.
pub fn glued_projection(d: &BranchData, theta: GluingPhase) -> Projected {
    let (ra, rna) = realization_weights(d);
    let rho_a = RealizationAmplitude::new(ra, 0.0).to_complex();
    let rho_na = RealizationAmplitude::new(rna, theta.radians()).to_complex();
    let probability = (rho_a + rho_na).norm_sqr();
    Projected {
        probability,
        out_of_range: !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&probability),
    }
}

/// Cross term `2 r_A r_notA cos(theta)`.
pub fn interference_term(d: &BranchData, theta: GluingPhase) -> f64 {
    let (ra, rna) = realization_weights(d);
    if ra == 0.0 || rna == 0.0 {
        return 0.0;
    }
    2.0 * ra * rna * theta.radians().cos()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseFit {
    /// In `[0, pi]`: a single total cannot identify the sign of the phase.
    pub theta: f64,
    pub cos_theta: f64,
    pub feasible: bool,
    /// Distance of the observed total outside the reachable interval (0 if inside).
    pub excess: f64,
    pub interference: f64,
}

/// Inverts the projected total for the gluing phase.
pub fn extract_phase(observed: f64, d: &BranchData, tol: f64) -> Result<PhaseFit> {
    let (ra, rna) = realization_weights(d);
    let span = 2.0 * ra * rna;
    if span <= f64::MIN_POSITIVE {
        return Err(Error::DegenerateBranch(
            "one branch has zero realization weight, so interference has no support and the phase is undefined"
                .into(),
        ));
    }
    let ltp = ltp_predict(d);
    let interference = observed - ltp;
    let raw = interference / span;
    let excess = (interference.abs() - span).max(0.0);
    let feasible = raw.abs() <= 1.0 + tol;
    let cos_theta = raw.clamp(-1.0, 1.0);
    Ok(PhaseFit {
        theta: cos_theta.acos(),
        cos_theta,
        feasible,
        excess,
        interference,
    })
}

/// `|P(B) + P(not B) - 1|` for a two-outcome event modelled branch by branch.
pub fn binary_consistency(
    d_b: &BranchData,
    d_not_b: &BranchData,
    theta_b: GluingPhase,
    theta_not_b: GluingPhase,
) -> Result<f64> {
    let complementary = (d_b.p_a - d_not_b.p_a).abs() <= DEFAULT_TOL
        && (d_b.p_not_a - d_not_b.p_not_a).abs() <= DEFAULT_TOL
        && (d_b.p_b_given_a + d_not_b.p_b_given_a - 1.0).abs() <= DEFAULT_TOL
        && (d_b.p_b_given_not_a + d_not_b.p_b_given_not_a - 1.0).abs() <= DEFAULT_TOL;
    if !complementary {
        return Err(Error::InvalidDistribution {
            location: "d_not_b".into(),
            reason: "conditionals are not complements of d_b".into(),
        });
    }
    let total = glued_projection(d_b, theta_b).probability + glued_projection(d_not_b, theta_not_b).probability;
    Ok((total - 1.0).abs())
}

/// Branch data and observed `P(B)` read from a behavior, with outcome 0 of
/// each observable as the "yes" event. The conditionals come from the first
/// context holding both observables; the observed total from the first
/// context holding `b` without `a`, if any.
pub fn branch_data_from_behavior(b: &Behavior, event_a: &str, event_b: &str) -> Result<(BranchData, Option<f64>)> {
    let s = b.scenario();
    s.observable_index(event_a)?;
    s.observable_index(event_b)?;
    let holds = |c: &crate::scenario::Context, id: &str| c.observables.iter().any(|o| o == id);
    let joint_ctx = s
        .contexts
        .iter()
        .find(|c| holds(c, event_a) && holds(c, event_b))
        .ok_or_else(|| Error::InvalidScenario(format!("no context measures both `{event_a}` and `{event_b}`")))?;
    let joint = marginal(b, &joint_ctx.id, &[event_a, event_b])?;
    let arity_b = s.observables[s.observable_index(event_b)?].arity;
    let p_a: f64 = joint.weights()[..arity_b].iter().sum();
    let p_ab = joint[0];
    let p_not_a_b: f64 = joint.weights().chunks(arity_b).skip(1).map(|row| row[0]).sum();
    let cond = |yes: f64, total: f64| if total > 0.0 { yes / total } else { 0.0 };
    let d = BranchData::new(p_a, cond(p_ab, p_a), 1.0 - p_a, cond(p_not_a_b, 1.0 - p_a))?;
    let observed = s
        .contexts
        .iter()
        .find(|c| holds(c, event_b) && !holds(c, event_a))
        .map(|c| marginal(b, &c.id, &[event_b]).map(|m| m[0]))
        .transpose()?;
    Ok((d, observed))
}
