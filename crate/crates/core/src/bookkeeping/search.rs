//! Cheapest deterministic classical simulation under caps.
//!
//! Policies are deterministic maps from context to memory symbol that do not
//! depend on λ, so each policy is a partition of the contexts into memory
//! blocks and its cost is `I(M;C) = H(block of C)`. Responses see λ and the
//! memory symbol but not the context, so within a block every observable
//! gets one outcome per λ. Partitions are tried in ascending cost order
//! (ties broken by their restricted-growth encoding) and the first one that
//! reproduces the behavior with at most `max_lambda` ontic states wins.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{context_prior_vector, entropy, simulate_behavior, simulation_costs, ClassicalSimulation};
use crate::embedding::{check_boolean_embedding, EmbeddingStatus};
use crate::error::{Error, Result};
use crate::hull::HullProblem;
use crate::scenario::{decode_outcome, encode_outcome, Behavior, Scenario};

pub const MAX_LAMBDA: usize = 8;
pub const MAX_MEMORY: usize = 8;
pub const MAX_CONTEXTS: usize = 8;
const MAX_PARTITION_VERTICES: u128 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookkeepingCaps {
    pub max_lambda: usize,
    pub max_memory: usize,
    /// Search nodes allowed per partition before it is left undecided.
    pub node_budget: u64,
}

impl Default for BookkeepingCaps {
    fn default() -> Self {
        BookkeepingCaps {
            max_lambda: 4,
            max_memory: 4,
            node_budget: 2_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BookkeepingReport {
    #[serde(rename = "H_M")]
    pub h_m: f64,
    #[serde(rename = "I_M_C")]
    pub i_m_c: f64,
    #[serde(rename = "I_C_O_given_lambda")]
    pub i_c_o_given_lambda: f64,
    pub reproduces: bool,
    /// Every candidate under the caps was enumerated and none reproduces.
    pub search_exhausted: bool,
    /// No cheaper candidate was left undecided by the node budget.
    pub certified: bool,
    pub embeddable: bool,
    pub memory_size: usize,
    pub ontic_states: usize,
    /// Contexts sharing each memory symbol.
    pub partition: Vec<Vec<String>>,
    pub reproduction_residual: Option<f64>,
    pub partitions_examined: usize,
    pub nodes: u64,
    pub simulation: Option<ClassicalSimulation>,
}

pub fn min_bookkeeping(b: &Behavior, caps: BookkeepingCaps, tol: f64) -> Result<BookkeepingReport> {
    min_bookkeeping_with_prior(b, caps, tol, None)
}

pub fn min_bookkeeping_with_prior(
    b: &Behavior,
    caps: BookkeepingCaps,
    tol: f64,
    prior: Option<&BTreeMap<String, f64>>,
) -> Result<BookkeepingReport> {
    let s = b.scenario();
    if caps.max_lambda == 0 || caps.max_lambda > MAX_LAMBDA {
        return Err(cap_error("max_lambda", caps.max_lambda, MAX_LAMBDA));
    }
    if caps.max_memory == 0 || caps.max_memory > MAX_MEMORY {
        return Err(cap_error("max_memory", caps.max_memory, MAX_MEMORY));
    }
    if s.contexts.len() > MAX_CONTEXTS {
        return Err(cap_error("contexts", s.contexts.len(), MAX_CONTEXTS));
    }
    let prior = context_prior_vector(s, prior)?;

    let cert = check_boolean_embedding(b, tol)?;
    if cert.status == EmbeddingStatus::Embeddable {
        return embeddable_report(b, &prior, &cert.joint.unwrap_or_default());
    }

    let target = b.cells();
    let mut candidates: Vec<(f64, Vec<usize>)> = set_partitions(s.contexts.len(), caps.max_memory)
        .into_iter()
        .map(|labels| (partition_cost(&labels, &prior), labels))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    let mut undecided = false;
    let mut nodes = 0;
    for (examined, (_, labels)) in candidates.iter().enumerate() {
        let outcome = try_partition(s, labels, &target, caps, tol)?;
        nodes += outcome.nodes;
        match outcome.result {
            PartitionResult::Found(sim) => {
                let simulated = simulate_behavior(&sim, s)?;
                let residual = max_abs_gap(&simulated.cells(), &target);
                if residual > tol {
                    return Err(Error::Solver(format!("bookkeeping certificate fails to reproduce: {residual}")));
                }
                let costs = simulation_costs(&sim, s, &prior)?;
                return Ok(BookkeepingReport {
                    h_m: costs.h_m,
                    i_m_c: costs.i_m_c.min(costs.h_m),
                    i_c_o_given_lambda: costs.i_c_o_given_lambda,
                    reproduces: true,
                    search_exhausted: false,
                    certified: !undecided,
                    embeddable: false,
                    memory_size: sim.memory_size,
                    ontic_states: sim.ontic_prior.len(),
                    partition: blocks_by_id(s, labels),
                    reproduction_residual: Some(residual),
                    partitions_examined: examined + 1,
                    nodes,
                    simulation: Some(sim),
                });
            }
            PartitionResult::Infeasible => {}
            PartitionResult::Undecided => undecided = true,
        }
    }
    Ok(BookkeepingReport {
        h_m: 0.0,
        i_m_c: 0.0,
        i_c_o_given_lambda: 0.0,
        reproduces: false,
        search_exhausted: !undecided,
        certified: !undecided,
        embeddable: false,
        memory_size: 0,
        ontic_states: 0,
        partition: Vec::new(),
        reproduction_residual: None,
        partitions_examined: candidates.len(),
        nodes,
        simulation: None,
    })
}

fn cap_error(what: &str, size: usize, cap: usize) -> Error {
    Error::CapExceeded {
        what: what.to_string(),
        size: size as u128,
        cap: cap as u128,
    }
}

fn max_abs_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn embeddable_report(
    b: &Behavior,
    prior: &[f64],
    joint: &[crate::embedding::JointEntry],
) -> Result<BookkeepingReport> {
    let s = b.scenario();
    let n_c = s.contexts.len();
    let mut ontic_prior = Vec::new();
    let mut response = Vec::new();
    for entry in joint {
        ontic_prior.push(entry.weight);
        let per_context = (0..n_c)
            .map(|c| {
                let outcome: Vec<usize> = s.contexts[c].observables.iter().map(|o| entry.assignment[o]).collect();
                let mut r = vec![0.0; s.context_size(c)];
                r[encode_outcome(&s.context_shape(c), &outcome)] = 1.0;
                r
            })
            .collect();
        response.push(vec![per_context]);
    }
    let total: f64 = ontic_prior.iter().sum();
    ontic_prior.iter_mut().for_each(|w| *w /= total);
    let sim = ClassicalSimulation {
        memory_policy: vec![vec![vec![1.0]; n_c]; ontic_prior.len()],
        ontic_prior,
        memory_size: 1,
        response,
    };
    let residual = max_abs_gap(&simulate_behavior(&sim, s)?.cells(), &b.cells());
    let costs = simulation_costs(&sim, s, prior)?;
    Ok(BookkeepingReport {
        h_m: 0.0,
        i_m_c: 0.0,
        i_c_o_given_lambda: costs.i_c_o_given_lambda,
        reproduces: true,
        search_exhausted: false,
        certified: true,
        embeddable: true,
        memory_size: 1,
        ontic_states: sim.ontic_prior.len(),
        partition: vec![s.contexts.iter().map(|c| c.id.clone()).collect()],
        reproduction_residual: Some(residual),
        partitions_examined: 0,
        nodes: 0,
        simulation: Some(sim),
    })
}

/// Restricted-growth strings of length `n` with at most `max_blocks` labels.
fn set_partitions(n: usize, max_blocks: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, n: usize, used: usize, max_blocks: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for label in 0..=used.min(max_blocks - 1) {
            prefix.push(label);
            rec(prefix, n, used.max(label + 1), max_blocks, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), n, 0, max_blocks, &mut out);
    out
}

fn partition_cost(labels: &[usize], prior: &[f64]) -> f64 {
    let blocks = labels.iter().max().map_or(0, |m| m + 1);
    let mut mass = vec![0.0; blocks];
    for (&l, &p) in labels.iter().zip(prior) {
        mass[l] += p;
    }
    mass.sort_by(f64::total_cmp);
    entropy(&mass).unwrap_or(f64::INFINITY)
}

fn blocks_by_id(s: &Scenario, labels: &[usize]) -> Vec<Vec<String>> {
    let blocks = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); blocks];
    for (c, &l) in labels.iter().enumerate() {
        out[l].push(s.contexts[c].id.clone());
    }
    out
}

enum PartitionResult {
    Found(ClassicalSimulation),
    Infeasible,
    Undecided,
}

struct PartitionOutcome {
    result: PartitionResult,
    nodes: u64,
}

/// Hull vertices of one partition: for each combination of per-block
/// assignments, the global cell selected in every context.
fn partition_vertices(s: &Scenario, labels: &[usize]) -> Result<Vec<Vec<usize>>> {
    let blocks = labels.iter().max().map_or(0, |m| m + 1);
    let offsets = s.cell_offsets();
    // per block: list of cell vectors (one entry per context of the block)
    let mut block_options: Vec<Vec<Vec<(usize, usize)>>> = Vec::with_capacity(blocks);
    let mut total: u128 = 1;
    for blk in 0..blocks {
        let contexts: Vec<usize> = (0..labels.len()).filter(|&c| labels[c] == blk).collect();
        let mut obs: Vec<usize> = contexts.iter().flat_map(|&c| s.context_members(c)).collect();
        obs.sort_unstable();
        obs.dedup();
        let shape: Vec<usize> = obs.iter().map(|&o| s.observables[o].arity).collect();
        let count: usize = shape.iter().product();
        total = total.saturating_mul(count as u128);
        if total > MAX_PARTITION_VERTICES {
            return Err(Error::CapExceeded {
                what: "simulation vertices per memory partition".into(),
                size: total,
                cap: MAX_PARTITION_VERTICES,
            });
        }
        let mut options = Vec::with_capacity(count);
        for k in 0..count {
            let values = decode_outcome(&shape, k);
            let cells = contexts
                .iter()
                .map(|&c| {
                    let outcome: Vec<usize> = s
                        .context_members(c)
                        .iter()
                        .map(|m| values[obs.binary_search(m).expect("member in block")])
                        .collect();
                    (c, offsets[c] + encode_outcome(&s.context_shape(c), &outcome))
                })
                .collect();
            options.push(cells);
        }
        block_options.push(options);
    }
    let shape: Vec<usize> = block_options.iter().map(Vec::len).collect();
    let count: usize = shape.iter().product();
    let mut vertices = Vec::with_capacity(count);
    for k in 0..count {
        let pick = decode_outcome(&shape, k);
        let mut v = vec![0; labels.len()];
        for (blk, &i) in pick.iter().enumerate() {
            for &(c, cell) in &block_options[blk][i] {
                v[c] = cell;
            }
        }
        vertices.push(v);
    }
    Ok(vertices)
}

fn try_partition(
    s: &Scenario,
    labels: &[usize],
    target: &[f64],
    caps: BookkeepingCaps,
    tol: f64,
) -> Result<PartitionOutcome> {
    let blocks: Vec<usize> = (0..s.contexts.len()).map(|c| s.context_size(c)).collect();
    let vertices: Vec<Vec<usize>> = partition_vertices(s, labels)?
        .into_iter()
        .filter(|v| v.iter().all(|&cell| target[cell] > tol))
        .collect();
    let infeasible = PartitionOutcome {
        result: PartitionResult::Infeasible,
        nodes: 0,
    };
    if vertices.is_empty() {
        return Ok(infeasible);
    }
    // relaxation without the ontic-state cap
    let relaxed = HullProblem::new(blocks.clone(), vertices.clone())?.project(target)?;
    if relaxed.distance > tol * target.len() as f64 {
        return Ok(infeasible);
    }

    let mut search = SupportSearch {
        blocks,
        vertices,
        target,
        tol,
        max_lambda: caps.max_lambda,
        budget: caps.node_budget,
        nodes: 0,
        offsets: s.cell_offsets(),
    };
    let found = search.run()?;
    let result = match found {
        Some((support, weights)) => PartitionResult::Found(build_simulation(s, labels, &support, &weights, &search)),
        None if search.nodes > search.budget => PartitionResult::Undecided,
        None => PartitionResult::Infeasible,
    };
    Ok(PartitionOutcome {
        result,
        nodes: search.nodes,
    })
}

fn build_simulation(
    s: &Scenario,
    labels: &[usize],
    support: &[usize],
    weights: &[f64],
    search: &SupportSearch<'_>,
) -> ClassicalSimulation {
    let n_c = s.contexts.len();
    let n_m = labels.iter().max().map_or(0, |m| m + 1);
    let mut ontic_prior = Vec::new();
    let mut response = Vec::new();
    for (&v, &w) in support.iter().zip(weights) {
        if w <= 0.0 {
            continue;
        }
        ontic_prior.push(w);
        let per_context: Vec<Vec<f64>> = (0..n_c)
            .map(|c| {
                let mut r = vec![0.0; s.context_size(c)];
                r[search.vertices[v][c] - search.offsets[c]] = 1.0;
                r
            })
            .collect();
        response.push(vec![per_context; n_m]);
    }
    let policy: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| {
            let mut p = vec![0.0; n_m];
            p[l] = 1.0;
            p
        })
        .collect();
    ClassicalSimulation {
        memory_policy: vec![policy; ontic_prior.len()],
        ontic_prior,
        memory_size: n_m,
        response,
    }
}

struct SupportSearch<'a> {
    blocks: Vec<usize>,
    vertices: Vec<Vec<usize>>,
    target: &'a [f64],
    tol: f64,
    max_lambda: usize,
    budget: u64,
    nodes: u64,
    offsets: Vec<usize>,
}

impl SupportSearch<'_> {
    fn run(&mut self) -> Result<Option<(Vec<usize>, Vec<f64>)>> {
        let mut covered = vec![0u32; self.target.len()];
        let mut excluded = vec![false; self.vertices.len()];
        self.dfs(&mut Vec::new(), &mut covered, &mut excluded)
    }

    fn uncovered(&self, covered: &[u32]) -> Vec<usize> {
        (0..self.target.len())
            .filter(|&cell| self.target[cell] > self.tol && covered[cell] == 0)
            .collect()
    }

    /// Most uncovered positive cells in any single context.
    fn worst_context_gap(&self, uncovered: &[usize]) -> usize {
        let mut per = vec![0; self.blocks.len()];
        for &cell in uncovered {
            let ctx = self.offsets.partition_point(|&o| o <= cell) - 1;
            per[ctx] += 1;
        }
        per.into_iter().max().unwrap_or(0)
    }

    fn fit(&self, support: &[usize]) -> Result<Option<Vec<f64>>> {
        let sub: Vec<Vec<usize>> = support.iter().map(|&v| self.vertices[v].clone()).collect();
        let hull = HullProblem::new(self.blocks.clone(), sub)?;
        let p = hull.project(self.target)?;
        let residual = hull.reproduction_residual(&p.weights, self.target);
        Ok((residual <= self.tol).then_some(p.weights))
    }

    fn dfs(
        &mut self,
        support: &mut Vec<usize>,
        covered: &mut [u32],
        excluded: &mut [bool],
    ) -> Result<Option<(Vec<usize>, Vec<f64>)>> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Ok(None);
        }
        let uncovered = self.uncovered(covered);
        let slots = self.max_lambda - support.len();
        if self.worst_context_gap(&uncovered) > slots {
            return Ok(None);
        }
        let branch_on: Vec<usize> = if uncovered.is_empty() {
            if let Some(w) = self.fit(support)? {
                return Ok(Some((support.clone(), w)));
            }
            if slots == 0 {
                return Ok(None);
            }
            (0..self.vertices.len())
                .filter(|&v| !excluded[v] && !support.contains(&v))
                .collect()
        } else {
            let candidates = |cell: usize| {
                (0..self.vertices.len())
                    .filter(|&v| !excluded[v] && self.vertices[v].contains(&cell))
                    .collect::<Vec<_>>()
            };
            uncovered
                .iter()
                .map(|&cell| candidates(cell))
                .min_by_key(Vec::len)
                .unwrap_or_default()
        };
        let mut newly_excluded = Vec::new();
        let mut found = None;
        for v in branch_on {
            support.push(v);
            for &cell in &self.vertices[v] {
                covered[cell] += 1;
            }
            excluded[v] = true;
            let r = self.dfs(support, covered, excluded);
            for &cell in &self.vertices[v] {
                covered[cell] -= 1;
            }
            support.pop();
            newly_excluded.push(v);
            match r? {
                Some(hit) => {
                    found = Some(hit);
                    break;
                }
                None if self.nodes > self.budget => break,
                None => {}
            }
        }
        for v in newly_excluded {
            excluded[v] = false;
        }
        Ok(found)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Context, Distribution, Observable};

    fn chsh_scenario() -> Scenario {
        let obs = ["A0", "A1", "B0", "B1"].map(|o| Observable::new(o, 2)).to_vec();
        let mut ctx = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                ctx.push(Context::new(format!("{x},{y}"), [format!("A{x}"), format!("B{y}")]));
            }
        }
        Scenario::new(obs, ctx).unwrap()
    }

    fn pr_box() -> Behavior {
        let s = chsh_scenario();
        let mut tables = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                let t = (0..4)
                    .map(|k| if ((k >> 1) ^ (k & 1)) == (x & y) { 0.5 } else { 0.0 })
                    .collect();
                tables.push(Distribution::new(t, 1e-12).unwrap());
            }
        }
        Behavior::new(s, tables).unwrap()
    }

    #[test]
    fn partition_enumeration() {
        assert_eq!(set_partitions(4, 4).len(), 15);
        assert_eq!(set_partitions(4, 2).len(), 8);
        assert_eq!(set_partitions(3, 1), vec![vec![0, 0, 0]]);
    }

    #[test]
    fn store_the_context() {
        let s = Scenario::new(
            vec![Observable::new("X", 2)],
            vec![Context::new("c0", ["X"]), Context::new("c1", ["X"])],
        )
        .unwrap();
        let b = Behavior::new(s, vec![Distribution::point(2, 0), Distribution::point(2, 1)]).unwrap();
        let r = min_bookkeeping(&b, BookkeepingCaps::default(), 1e-9).unwrap();
        assert!(r.reproduces);
        assert!((r.i_m_c - 1.0).abs() < 1e-9);
        assert_eq!(r.memory_size, 2);
    }

    #[test]
    fn embeddable_costs_nothing() {
        let s = chsh_scenario();
        let joint: Vec<f64> = (0..16).map(|k| if k == 0 || k == 15 { 0.5 } else { 0.0 }).collect();
        let b = Behavior::from_joint(s, &joint).unwrap();
        let r = min_bookkeeping(&b, BookkeepingCaps::default(), 1e-9).unwrap();
        assert!(r.embeddable && r.reproduces);
        assert_eq!((r.i_m_c, r.h_m, r.memory_size), (0.0, 0.0, 1));
    }

    #[test]
    fn pr_box_needs_a_quarter_bit_split() {
        let r = min_bookkeeping(&pr_box(), BookkeepingCaps::default(), 1e-9).unwrap();
        assert!(r.reproduces && r.certified);
        let expected = entropy(&[0.25, 0.75]).unwrap();
        assert!((r.i_m_c - expected).abs() < 1e-9);
        assert_eq!(r.ontic_states, 2);
        assert_eq!(r.partition, vec![vec!["0,0", "0,1", "1,0"], vec!["1,1"]]);
        assert!(r.i_m_c <= r.h_m + 1e-9);
    }

    #[test]
    fn pr_box_with_one_memory_symbol_is_exhausted() {
        let caps = BookkeepingCaps {
            max_memory: 1,
            ..BookkeepingCaps::default()
        };
        let r = min_bookkeeping(&pr_box(), caps, 1e-9).unwrap();
        assert!(!r.reproduces && r.search_exhausted);
    }

    #[test]
    fn caps_are_enforced() {
        let caps = BookkeepingCaps {
            max_lambda: 9,
            ..BookkeepingCaps::default()
        };
        assert!(matches!(min_bookkeeping(&pr_box(), caps, 1e-9), Err(Error::CapExceeded { .. })));
    }
}
