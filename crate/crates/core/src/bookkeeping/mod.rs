//! Classical bookkeeping cost of contextual statistics.
//!
//! A classical simulation draws an ontic state λ, writes a memory symbol M
//! from λ and the context, and answers from (λ, M, context). The cost of the
//! context dependence is measured on the stationary joint of (λ, C, M, O)
//! induced by the simulation and a prior over contexts.

mod info;
mod search;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Behavior, Distribution, Scenario};

pub use info::{conditional_mutual_information, entropy, mutual_information};
pub use search::{min_bookkeeping, min_bookkeeping_with_prior, BookkeepingCaps, BookkeepingReport};

const SIM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalSimulation {
    pub ontic_prior: Vec<f64>,
    pub memory_size: usize,
    /// `memory_policy[λ][c][m]`.
    pub memory_policy: Vec<Vec<Vec<f64>>>,
    /// `response[λ][m][c]` is a distribution over the cells of context `c`.
    pub response: Vec<Vec<Vec<Vec<f64>>>>,
}

fn check_dist(p: &[f64], location: impl Fn() -> String) -> Result<()> {
    let total: f64 = p.iter().sum();
    if p.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > SIM_TOL {
        return Err(Error::InvalidDistribution {
            location: location(),
            reason: format!("not a distribution (sum {total})"),
        });
    }
    Ok(())
}

impl ClassicalSimulation {
    /// Checks every component against the scenario's context shapes.
    pub fn validate(&self, s: &Scenario) -> Result<()> {
        let n_l = self.ontic_prior.len();
        let n_c = s.contexts.len();
        check_dist(&self.ontic_prior, || "ontic_prior".into())?;
        if self.memory_size == 0 || self.memory_policy.len() != n_l || self.response.len() != n_l {
            return Err(Error::DimensionMismatch("simulation components disagree on |λ| or |M|".into()));
        }
        for l in 0..n_l {
            if self.memory_policy[l].len() != n_c || self.response[l].len() != self.memory_size {
                return Err(Error::DimensionMismatch(format!("simulation entry for λ={l} has wrong shape")));
            }
            for c in 0..n_c {
                let pol = &self.memory_policy[l][c];
                if pol.len() != self.memory_size {
                    return Err(Error::DimensionMismatch(format!("memory_policy[{l}][{c}] has wrong length")));
                }
                check_dist(pol, || format!("memory_policy[{l}][{c}]"))?;
            }
            for m in 0..self.memory_size {
                if self.response[l][m].len() != n_c {
                    return Err(Error::DimensionMismatch(format!("response[{l}][{m}] has wrong length")));
                }
                for c in 0..n_c {
                    let r = &self.response[l][m][c];
                    if r.len() != s.context_size(c) {
                        return Err(Error::DimensionMismatch(format!(
                            "response[{l}][{m}][{c}] has {} cells, context has {}",
                            r.len(),
                            s.context_size(c)
                        )));
                    }
                    check_dist(r, || format!("response[{l}][{m}][{c}]"))?;
                }
            }
        }
        Ok(())
    }
}

/// Averages the simulation into per-context tables.
pub fn simulate_behavior(sim: &ClassicalSimulation, s: &Scenario) -> Result<Behavior> {
    sim.validate(s)?;
    let mut tables = Vec::with_capacity(s.contexts.len());
    for c in 0..s.contexts.len() {
        let mut t = vec![0.0; s.context_size(c)];
        for (l, &pl) in sim.ontic_prior.iter().enumerate() {
            for m in 0..sim.memory_size {
                let w = pl * sim.memory_policy[l][c][m];
                if w == 0.0 {
                    continue;
                }
                for (cell, r) in sim.response[l][m][c].iter().enumerate() {
                    t[cell] += w * r;
                }
            }
        }
        tables.push(Distribution::new(t, SIM_TOL)?);
    }
    Behavior::new(s.clone(), tables)
}

/// Context prior in context order; uniform when `prior` is `None`.
pub fn context_prior_vector(s: &Scenario, prior: Option<&BTreeMap<String, f64>>) -> Result<Vec<f64>> {
    let n = s.contexts.len();
    let Some(prior) = prior else {
        return Ok(vec![1.0 / n as f64; n]);
    };
    for id in prior.keys() {
        s.context_index(id)?;
    }
    let v: Vec<f64> = s
        .contexts
        .iter()
        .map(|c| prior.get(&c.id).copied().unwrap_or(0.0))
        .collect();
    check_dist(&v, || "context_prior".into())?;
    Ok(v)
}

/// Information quantities of a simulation under a context prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationCosts {
    pub h_m: f64,
    pub i_m_c: f64,
    pub i_c_o_given_lambda: f64,
}

/// `H(M)`, `I(M;C)` and `I(C;O|λ)` on the stationary joint. `O` is the
/// joint outcome index within the context.
pub fn simulation_costs(sim: &ClassicalSimulation, s: &Scenario, prior: &[f64]) -> Result<SimulationCosts> {
    sim.validate(s)?;
    let n_c = s.contexts.len();
    if prior.len() != n_c {
        return Err(Error::DimensionMismatch("context prior length".into()));
    }
    let n_l = sim.ontic_prior.len();
    let n_o = (0..n_c).map(|c| s.context_size(c)).max().unwrap_or(0);
    let mut mc = vec![vec![0.0; n_c]; sim.memory_size];
    let mut col = vec![vec![vec![0.0; n_l]; n_o]; n_c];
    for (l, &pl) in sim.ontic_prior.iter().enumerate() {
        for (c, &pc) in prior.iter().enumerate() {
            for m in 0..sim.memory_size {
                let w = pl * pc * sim.memory_policy[l][c][m];
                mc[m][c] += w;
                for (o, r) in sim.response[l][m][c].iter().enumerate() {
                    col[c][o][l] += w * r;
                }
            }
        }
    }
    let m_marg: Vec<f64> = mc.iter().map(|r| r.iter().sum()).collect();
    Ok(SimulationCosts {
        h_m: entropy(&m_marg)?,
        i_m_c: mutual_information(&mc)?,
        i_c_o_given_lambda: conditional_mutual_information(&col)?,
    })
}
