//! Logic-worlds glued by phase-carrying transition maps.
//!
//! A transition sends atoms of its source world to atoms of its target world
//! and adds a phase offset on each transported branch. Composing transitions
//! along a closed loop and reading off the accumulated per-branch phase gives
//! the loop holonomy; a relative phase between two transported branches is a
//! gluing phase for [`crate::projection`].
//!
//! Holonomy phases are reduced to `(-pi, pi]`, gluing phases to `[0, 2pi)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::{reduce_symmetric, GluingPhase};
use crate::scenario::Distribution;

pub const DEFAULT_MAX_LOOP_LEN: usize = 6;
pub const MAX_LOOPS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogicWorld {
    pub id: String,
    pub atoms: Vec<String>,
    pub measure: Distribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchMap {
    pub from: String,
    pub to: String,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionMap {
    pub source: String,
    pub target: String,
    pub branches: Vec<BranchMap>,
}

impl TransitionMap {
    fn image(&self, atom: &str) -> Option<&BranchMap> {
        self.branches.iter().find(|b| b.from == atom)
    }
}

/// On-disk atlas layout; `measure` defaults to uniform.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtlasFile {
    pub worlds: Vec<WorldFile>,
    #[serde(default)]
    pub transitions: Vec<TransitionMap>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WorldFile {
    pub id: String,
    pub atoms: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atlas {
    worlds: BTreeMap<String, LogicWorld>,
    transitions: Vec<TransitionMap>,
    index: HashMap<(String, String), usize>,
}

impl Atlas {
    pub fn new(worlds: Vec<LogicWorld>, transitions: Vec<TransitionMap>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for w in worlds {
            let distinct: BTreeSet<&String> = w.atoms.iter().collect();
            if distinct.len() != w.atoms.len() {
                return Err(Error::InvalidAtlas(format!("world `{}` has repeated atoms", w.id)));
            }
            if w.measure.len() != w.atoms.len() {
                return Err(Error::InvalidAtlas(format!("world `{}` measure does not match its atoms", w.id)));
            }
            if map.contains_key(&w.id) {
                return Err(Error::InvalidAtlas(format!("duplicate world `{}`", w.id)));
            }
            map.insert(w.id.clone(), w);
        }
        let mut index = HashMap::new();
        for (k, t) in transitions.iter().enumerate() {
            let (src, tgt) = match (map.get(&t.source), map.get(&t.target)) {
                (Some(s), Some(g)) => (s, g),
                _ => {
                    return Err(Error::InvalidAtlas(format!(
                        "transition {} -> {} references an unknown world",
                        t.source, t.target
                    )))
                }
            };
            if index.insert((t.source.clone(), t.target.clone()), k).is_some() {
                return Err(Error::InvalidAtlas(format!("two transitions {} -> {}", t.source, t.target)));
            }
            let mut froms = BTreeSet::new();
            let mut tos = BTreeSet::new();
            for b in &t.branches {
                if !src.atoms.contains(&b.from) || !tgt.atoms.contains(&b.to) {
                    return Err(Error::InvalidAtlas(format!(
                        "transition {} -> {}: branch {} -> {} uses unknown atoms",
                        t.source, t.target, b.from, b.to
                    )));
                }
                if !froms.insert(&b.from) || !tos.insert(&b.to) {
                    return Err(Error::InvalidAtlas(format!(
                        "transition {} -> {} is not injective",
                        t.source, t.target
                    )));
                }
                if !b.phase.is_finite() {
                    return Err(Error::InvalidAtlas(format!(
                        "transition {} -> {}: non-finite phase",
                        t.source, t.target
                    )));
                }
            }
        }
        Ok(Atlas {
            worlds: map,
            transitions,
            index,
        })
    }

    pub fn from_file(file: AtlasFile) -> Result<Self> {
        let worlds = file
            .worlds
            .into_iter()
            .enumerate()
            .map(|(i, w)| {
                let measure = match w.measure {
                    Some(m) => Distribution::new(m, 1e-9).map_err(|e| Error::schema(format!("worlds[{i}].measure"), e.to_string()))?,
                    None => Distribution::uniform(w.atoms.len()),
                };
                Ok(LogicWorld {
                    id: w.id,
                    atoms: w.atoms,
                    measure,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Atlas::new(worlds, file.transitions)
    }

    pub fn to_file(&self) -> AtlasFile {
        AtlasFile {
            worlds: self
                .worlds
                .values()
                .map(|w| WorldFile {
                    id: w.id.clone(),
                    atoms: w.atoms.clone(),
                    measure: Some(w.measure.weights().to_vec()),
                })
                .collect(),
            transitions: self.transitions.clone(),
        }
    }

    pub fn worlds(&self) -> impl Iterator<Item = &LogicWorld> {
        self.worlds.values()
    }

    pub fn world(&self, id: &str) -> Result<&LogicWorld> {
        self.worlds.get(id).ok_or_else(|| Error::UnknownContext(id.to_string()))
    }

    pub fn transitions(&self) -> &[TransitionMap] {
        &self.transitions
    }

    pub fn transition(&self, source: &str, target: &str) -> Result<&TransitionMap> {
        self.index
            .get(&(source.to_string(), target.to_string()))
            .map(|&k| &self.transitions[k])
            .ok_or_else(|| Error::MissingTransition {
                source_id: source.to_string(),
                target_id: target.to_string(),
            })
    }

    /// Adds `delta[source] - delta[target]` to every branch phase; worlds
    /// missing from `delta` get zero.
    pub fn gauge_transform(&self, delta: &BTreeMap<String, f64>) -> Atlas {
        let d = |w: &str| delta.get(w).copied().unwrap_or(0.0);
        let transitions = self
            .transitions
            .iter()
            .map(|t| TransitionMap {
                source: t.source.clone(),
                target: t.target.clone(),
                branches: t
                    .branches
                    .iter()
                    .map(|b| BranchMap {
                        from: b.from.clone(),
                        to: b.to.clone(),
                        phase: b.phase + d(&t.source) - d(&t.target),
                    })
                    .collect(),
            })
            .collect();
        Atlas {
            worlds: self.worlds.clone(),
            transitions,
            index: self.index.clone(),
        }
    }
}

/// Relational composite of a path: start atom → (end atom, accumulated phase).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeMap {
    pub path: Vec<String>,
    pub correspondence: BTreeMap<String, (String, f64)>,
}

pub fn compose_path(atlas: &Atlas, path: &[&str]) -> Result<CompositeMap> {
    let first = path
        .first()
        .ok_or_else(|| Error::InvalidAtlas("empty path".into()))?;
    let start = atlas.world(first)?;
    let mut correspondence: BTreeMap<String, (String, f64)> = if path.len() == 1 {
        start.atoms.iter().map(|a| (a.clone(), (a.clone(), 0.0))).collect()
    } else {
        atlas
            .transition(path[0], path[1])?
            .branches
            .iter()
            .map(|b| (b.from.clone(), (b.from.clone(), 0.0)))
            .collect()
    };
    for hop in path.windows(2) {
        let t = atlas.transition(hop[0], hop[1])?;
        for (image, phase) in correspondence.values_mut() {
            let b = t.image(image).ok_or_else(|| Error::BrokenChain {
                atom: image.clone(),
                source_id: hop[0].to_string(),
                target_id: hop[1].to_string(),
            })?;
            *image = b.to.clone();
            *phase += b.phase;
        }
    }
    Ok(CompositeMap {
        path: path.iter().map(|s| s.to_string()).collect(),
        correspondence,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolonomyResult {
    #[serde(rename = "loop")]
    pub loop_path: Vec<String>,
    /// Phases of branches that return to their starting atom, in `(-pi, pi]`.
    pub per_branch_phase: BTreeMap<String, f64>,
    /// Branches that come back as a different atom, with their image.
    pub non_returning: BTreeMap<String, String>,
    pub flat: bool,
    pub max_abs_phase: f64,
}

pub fn loop_holonomy(atlas: &Atlas, path: &[&str], tol: f64) -> Result<HolonomyResult> {
    match (path.first(), path.last()) {
        (Some(a), Some(b)) if a == b && path.len() >= 2 => {}
        _ => {
            return Err(Error::OpenLoop {
                first: path.first().map(|s| s.to_string()).unwrap_or_default(),
                last: path.last().map(|s| s.to_string()).unwrap_or_default(),
            })
        }
    }
    let composite = compose_path(atlas, path)?;
    let mut per_branch_phase = BTreeMap::new();
    let mut non_returning = BTreeMap::new();
    for (atom, (image, phase)) in composite.correspondence {
        if image == atom {
            per_branch_phase.insert(atom, reduce_symmetric(phase));
        } else {
            non_returning.insert(atom, image);
        }
    }
    let max_abs_phase = per_branch_phase.values().map(|p| p.abs()).fold(0.0, f64::max);
    Ok(HolonomyResult {
        loop_path: composite.path,
        per_branch_phase,
        non_returning,
        flat: max_abs_phase <= tol,
        max_abs_phase,
    })
}

/// A branch transported along a path: the atom in the path's first world.
#[derive(Clone, Copy, Debug)]
pub struct TransportedBranch<'a> {
    pub path: &'a [&'a str],
    pub atom: &'a str,
}

/// `Θ = φ(Ā) - φ(A)` for two branches transported to a common world.
pub fn gluing_phase(atlas: &Atlas, branch_a: TransportedBranch<'_>, branch_not_a: TransportedBranch<'_>) -> Result<GluingPhase> {
    fn end<'a>(b: &TransportedBranch<'a>) -> &'a str {
        b.path.last().copied().unwrap_or_default()
    }
    if end(&branch_a) != end(&branch_not_a) {
        return Err(Error::InvalidAtlas(format!(
            "branches end in different worlds `{}` and `{}`",
            end(&branch_a),
            end(&branch_not_a)
        )));
    }
    let phase = |b: &TransportedBranch<'_>| -> Result<f64> {
        let composite = compose_path(atlas, b.path)?;
        composite
            .correspondence
            .get(b.atom)
            .map(|(_, p)| *p)
            .ok_or_else(|| Error::BrokenChain {
                atom: b.atom.to_string(),
                source_id: b.path[0].to_string(),
                target_id: end(b).to_string(),
            })
    };
    Ok(GluingPhase::new(phase(&branch_not_a)? - phase(&branch_a)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub flat: bool,
    pub max_abs_phase: f64,
    pub witness: Option<Vec<String>>,
    pub loops_checked: usize,
    /// Loops along which some branch returns as a different atom.
    pub non_returning_loops: Vec<Vec<String>>,
    /// Loops whose branch chains break before closing.
    pub broken_loops: usize,
}

/// Simple directed cycles with at most `max_len` transitions, each listed
/// once starting from its smallest world id.
pub fn enumerate_loops(atlas: &Atlas, max_len: usize) -> Result<Vec<Vec<String>>> {
    let ids: Vec<&String> = atlas.worlds.keys().collect();
    let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut adj = vec![Vec::new(); ids.len()];
    for t in &atlas.transitions {
        adj[pos[t.source.as_str()]].push(pos[t.target.as_str()]);
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
    }
    let mut out = Vec::new();
    for start in 0..ids.len() {
        let mut stack = vec![start];
        let mut on_path = vec![false; ids.len()];
        on_path[start] = true;
        extend(&adj, start, &mut stack, &mut on_path, max_len, &mut out)?;
    }
    return Ok(out
        .into_iter()
        .map(|c| c.into_iter().map(|i| ids[i].clone()).collect())
        .collect());

    fn extend(
        adj: &[Vec<usize>],
        start: usize,
        stack: &mut Vec<usize>,
        on_path: &mut [bool],
        max_len: usize,
        out: &mut Vec<Vec<usize>>,
    ) -> Result<()> {
        let last = *stack.last().expect("non-empty");
        for &next in &adj[last] {
            if next == start {
                let mut cycle = stack.clone();
                cycle.push(start);
                out.push(cycle);
                if out.len() > MAX_LOOPS {
                    return Err(Error::CapExceeded {
                        what: "loops".into(),
                        size: out.len() as u128,
                        cap: MAX_LOOPS as u128,
                    });
                }
            } else if next > start && !on_path[next] && stack.len() < max_len {
                stack.push(next);
                on_path[next] = true;
                extend(adj, start, stack, on_path, max_len, out)?;
                on_path[next] = false;
                stack.pop();
            }
        }
        Ok(())
    }
}

pub fn flatness_check(atlas: &Atlas, max_loop_len: usize, tol: f64) -> Result<FlatnessReport> {
    let cycles = enumerate_loops(atlas, max_loop_len)?;
    let mut report = FlatnessReport {
        flat: true,
        max_abs_phase: 0.0,
        witness: None,
        loops_checked: 0,
        non_returning_loops: Vec::new(),
        broken_loops: 0,
    };
    for cycle in cycles {
        let path: Vec<&str> = cycle.iter().map(String::as_str).collect();
        let h = match loop_holonomy(atlas, &path, tol) {
            Ok(h) => h,
            Err(Error::BrokenChain { .. }) => {
                report.broken_loops += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        report.loops_checked += 1;
        if !h.non_returning.is_empty() {
            report.non_returning_loops.push(cycle.clone());
        }
        if h.max_abs_phase > report.max_abs_phase {
            report.max_abs_phase = h.max_abs_phase;
            report.witness = Some(cycle);
        }
    }
    report.flat = report.max_abs_phase <= tol;
    Ok(report)
}

pub fn parse_atlas(json: &str) -> Result<Atlas> {
    let file: AtlasFile = serde_json::from_str(json)?;
    Atlas::from_file(file)
}
