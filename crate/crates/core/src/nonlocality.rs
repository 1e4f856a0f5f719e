//! Bipartite behaviors: no-signalling, local hidden-variable decompositions
//! and the CHSH functional.
//!
//! Tables are indexed by setting pair `(x, y)` and hold `P(a, b | x, y)` with
//! `b` fastest. Correlators use the `(-1)^outcome` encoding.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingStatus, NOISE_FRACTION};
use crate::error::{Error, Result};
use crate::hull::HullProblem;
use crate::scenario::{decode_outcome, Behavior, Context, Distribution, Observable, Scenario};

/// Largest settings or outcome count per party.
pub const MAX_PARTY_SIZE: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteBehavior {
    settings: (usize, usize),
    outcomes: (usize, usize),
    /// Index `x * |Y| + y`.
    tables: Vec<Distribution>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BipartiteFile {
    pub settings: [usize; 2],
    pub outcomes: [usize; 2],
    pub tables: BTreeMap<String, Vec<f64>>,
}

impl BipartiteBehavior {
    pub fn new(settings: (usize, usize), outcomes: (usize, usize), tables: Vec<Distribution>) -> Result<Self> {
        if settings.0 == 0 || settings.1 == 0 || outcomes.0 < 2 || outcomes.1 < 2 {
            return Err(Error::InvalidScenario("bipartite behavior needs settings ≥ 1 and outcomes ≥ 2".into()));
        }
        if tables.len() != settings.0 * settings.1 {
            return Err(Error::DimensionMismatch(format!(
                "expected {} tables, found {}",
                settings.0 * settings.1,
                tables.len()
            )));
        }
        let cells = outcomes.0 * outcomes.1;
        if let Some(k) = tables.iter().position(|t| t.len() != cells) {
            return Err(Error::DimensionMismatch(format!("table {k} has {} cells, expected {cells}", tables[k].len())));
        }
        Ok(BipartiteBehavior {
            settings,
            outcomes,
            tables,
        })
    }

    /// Builds a behavior from a function returning `P(a, b | x, y)`.
    pub fn from_fn(
        settings: (usize, usize),
        outcomes: (usize, usize),
        tol: f64,
        p: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut tables = Vec::new();
        for x in 0..settings.0 {
            for y in 0..settings.1 {
                let mut t = Vec::with_capacity(outcomes.0 * outcomes.1);
                for a in 0..outcomes.0 {
                    for b in 0..outcomes.1 {
                        t.push(p(a, b, x, y));
                    }
                }
                tables.push(Distribution::new(t, tol)?);
            }
        }
        BipartiteBehavior::new(settings, outcomes, tables)
    }

    pub fn from_file(file: BipartiteFile) -> Result<Self> {
        let settings = (file.settings[0], file.settings[1]);
        let outcomes = (file.outcomes[0], file.outcomes[1]);
        let mut tables = Vec::new();
        for x in 0..settings.0 {
            for y in 0..settings.1 {
                let key = format!("{x},{y}");
                let raw = file
                    .tables
                    .get(&key)
                    .ok_or_else(|| Error::schema(format!("tables.{key}"), "missing table"))?;
                let dist = Distribution::new(raw.clone(), 1e-9)
                    .map_err(|e| Error::schema(format!("tables.{key}"), e.to_string()))?;
                tables.push(dist);
            }
        }
        if file.tables.len() != tables.len() {
            let extra = file
                .tables
                .keys()
                .find(|k| {
                    let mut it = k.split(',').map(str::parse::<usize>);
                    !matches!((it.next(), it.next(), it.next()), (Some(Ok(x)), Some(Ok(y)), None) if x < settings.0 && y < settings.1)
                })
                .cloned()
                .unwrap_or_default();
            return Err(Error::schema(format!("tables.{extra}"), "unexpected setting pair"));
        }
        BipartiteBehavior::new(settings, outcomes, tables)
    }

    pub fn to_file(&self) -> BipartiteFile {
        let mut tables = BTreeMap::new();
        for x in 0..self.settings.0 {
            for y in 0..self.settings.1 {
                tables.insert(format!("{x},{y}"), self.table(x, y).weights().to_vec());
            }
        }
        BipartiteFile {
            settings: [self.settings.0, self.settings.1],
            outcomes: [self.outcomes.0, self.outcomes.1],
            tables,
        }
    }

    pub fn settings(&self) -> (usize, usize) {
        self.settings
    }

    pub fn outcomes(&self) -> (usize, usize) {
        self.outcomes
    }

    pub fn table(&self, x: usize, y: usize) -> &Distribution {
        &self.tables[x * self.settings.1 + y]
    }

    pub fn prob(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.table(x, y)[a * self.outcomes.1 + b]
    }

    pub fn cells(&self) -> Vec<f64> {
        self.tables.iter().flat_map(|t| t.weights().iter().copied()).collect()
    }

    /// Correlator `sum (-1)^(a xor b) P(a, b | x, y)`; outcomes are read by parity.
    pub fn correlator(&self, x: usize, y: usize) -> f64 {
        let mut e = 0.0;
        for a in 0..self.outcomes.0 {
            for b in 0..self.outcomes.1 {
                let sign = if (a ^ b) & 1 == 0 { 1.0 } else { -1.0 };
                e += sign * self.prob(a, b, x, y);
            }
        }
        e
    }

    /// Same statistics as a four-context scenario with observables `Ax`, `By`
    /// and contexts `"x,y" = [Ax, By]`.
    pub fn to_scenario(&self) -> Result<Behavior> {
        let mut observables = Vec::new();
        for x in 0..self.settings.0 {
            observables.push(Observable::new(format!("A{x}"), self.outcomes.0));
        }
        for y in 0..self.settings.1 {
            observables.push(Observable::new(format!("B{y}"), self.outcomes.1));
        }
        let mut contexts = Vec::new();
        for x in 0..self.settings.0 {
            for y in 0..self.settings.1 {
                contexts.push(Context::new(format!("{x},{y}"), [format!("A{x}"), format!("B{y}")]));
            }
        }
        Behavior::new(Scenario::new(observables, contexts)?, self.tables.clone())
    }
}

pub fn parse_bipartite(json: &str) -> Result<BipartiteBehavior> {
    let file: BipartiteFile = serde_json::from_str(json)?;
    BipartiteBehavior::from_file(file)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoSignallingReport {
    pub pass: bool,
    pub max_residual: f64,
    /// Largest shift of Alice's marginal with Bob's setting.
    pub alice_residual: f64,
    /// Largest shift of Bob's marginal with Alice's setting.
    pub bob_residual: f64,
    pub tol: f64,
}

pub fn check_no_signalling(b: &BipartiteBehavior, tol: f64) -> NoSignallingReport {
    let (nx, ny) = b.settings;
    let (na, nb) = b.outcomes;
    let alice = |a: usize, x: usize, y: usize| (0..nb).map(|bo| b.prob(a, bo, x, y)).sum::<f64>();
    let bob = |bo: usize, x: usize, y: usize| (0..na).map(|a| b.prob(a, bo, x, y)).sum::<f64>();
    let mut alice_residual: f64 = 0.0;
    for x in 0..nx {
        for a in 0..na {
            for y in 0..ny {
                for y2 in y + 1..ny {
                    alice_residual = alice_residual.max((alice(a, x, y) - alice(a, x, y2)).abs());
                }
            }
        }
    }
    let mut bob_residual: f64 = 0.0;
    for y in 0..ny {
        for bo in 0..nb {
            for x in 0..nx {
                for x2 in x + 1..nx {
                    bob_residual = bob_residual.max((bob(bo, x, y) - bob(bo, x2, y)).abs());
                }
            }
        }
    }
    let max_residual = alice_residual.max(bob_residual);
    NoSignallingReport {
        pass: max_residual <= tol,
        max_residual,
        alice_residual,
        bob_residual,
        tol,
    }
}

/// One deterministic local strategy: Alice answers `alice[x]`, Bob `bob[y]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalStrategy {
    pub alice: Vec<usize>,
    pub bob: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalModel {
    pub strategies: Vec<LocalStrategy>,
    pub prior: Vec<f64>,
}

impl LocalModel {
    pub fn induced(&self, settings: (usize, usize), outcomes: (usize, usize)) -> Result<BipartiteBehavior> {
        BipartiteBehavior::from_fn(settings, outcomes, 1e-9, |a, b, x, y| {
            self.strategies
                .iter()
                .zip(&self.prior)
                .filter(|(s, _)| s.alice[x] == a && s.bob[y] == b)
                .map(|(_, &w)| w)
                .sum()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellWitness {
    /// Coefficient per cell, keyed by setting pair `"x,y"`.
    pub coefficients: BTreeMap<String, Vec<f64>>,
    pub value: f64,
    /// Maximum over deterministic local strategies.
    pub bound: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalDecomposition {
    pub status: EmbeddingStatus,
    /// Depth inside the local polytope when feasible, minus the distance to it otherwise.
    pub margin: f64,
    pub model: Option<LocalModel>,
    pub witness: Option<BellWitness>,
    pub reproduction_residual: Option<f64>,
    pub chsh: Option<f64>,
    pub tol: f64,
}

fn check_caps(b: &BipartiteBehavior) -> Result<()> {
    for (what, n) in [
        ("alice settings", b.settings.0),
        ("bob settings", b.settings.1),
        ("alice outcomes", b.outcomes.0),
        ("bob outcomes", b.outcomes.1),
    ] {
        if n > MAX_PARTY_SIZE {
            return Err(Error::CapExceeded {
                what: what.into(),
                size: n as u128,
                cap: MAX_PARTY_SIZE as u128,
            });
        }
    }
    Ok(())
}

/// Deterministic strategies and the corresponding hull over all table cells.
pub fn local_polytope(settings: (usize, usize), outcomes: (usize, usize)) -> Result<(Vec<LocalStrategy>, HullProblem)> {
    let (nx, ny) = settings;
    let (na, nb) = outcomes;
    let alice_shape = vec![na; nx];
    let bob_shape = vec![nb; ny];
    let n_alice: usize = alice_shape.iter().product();
    let n_bob: usize = bob_shape.iter().product();
    let mut strategies = Vec::with_capacity(n_alice * n_bob);
    let mut vertices = Vec::with_capacity(n_alice * n_bob);
    for i in 0..n_alice {
        let alice = decode_outcome(&alice_shape, i);
        for j in 0..n_bob {
            let bob = decode_outcome(&bob_shape, j);
            let mut v = Vec::with_capacity(nx * ny);
            for x in 0..nx {
                for y in 0..ny {
                    v.push((x * ny + y) * na * nb + alice[x] * nb + bob[y]);
                }
            }
            vertices.push(v);
            strategies.push(LocalStrategy {
                alice: alice.clone(),
                bob,
            });
        }
    }
    let hull = HullProblem::new(vec![na * nb; nx * ny], vertices)?;
    Ok((strategies, hull))
}

pub fn local_decomposition(b: &BipartiteBehavior, tol: f64) -> Result<LocalDecomposition> {
    check_caps(b)?;
    let (strategies, hull) = local_polytope(b.settings, b.outcomes)?;
    let cells = b.cells();
    let projection = hull.project(&cells)?;
    let residual = hull.reproduction_residual(&projection.weights, &cells);
    let chsh = chsh_value(b).ok();
    let model = || {
        let (strategies, prior) = strategies
            .iter()
            .zip(&projection.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(s, &w)| (s.clone(), w))
            .unzip();
        LocalModel { strategies, prior }
    };
    let witness = || {
        let cells_per = b.outcomes.0 * b.outcomes.1;
        let mut coefficients = BTreeMap::new();
        for x in 0..b.settings.0 {
            for y in 0..b.settings.1 {
                let k = x * b.settings.1 + y;
                coefficients.insert(
                    format!("{x},{y}"),
                    projection.witness.coefficients[k * cells_per..(k + 1) * cells_per].to_vec(),
                );
            }
        }
        BellWitness {
            coefficients,
            value: projection.witness.value,
            bound: projection.witness.bound,
            margin: projection.witness.margin,
        }
    };
    let out = if projection.distance > tol && projection.witness.margin > tol {
        LocalDecomposition {
            status: EmbeddingStatus::NonEmbeddable,
            margin: -projection.witness.margin,
            model: None,
            witness: Some(witness()),
            reproduction_residual: None,
            chsh,
            tol,
        }
    } else if projection.distance <= tol * NOISE_FRACTION && residual <= tol {
        LocalDecomposition {
            status: EmbeddingStatus::Embeddable,
            margin: hull.depth(&cells)?.max(0.0),
            model: Some(model()),
            witness: None,
            reproduction_residual: Some(residual),
            chsh,
            tol,
        }
    } else {
        LocalDecomposition {
            status: EmbeddingStatus::Marginal,
            margin: -projection.distance,
            model: Some(model()),
            witness: Some(witness()),
            reproduction_residual: Some(residual),
            chsh,
            tol,
        }
    };
    Ok(out)
}

/// `S = E(0,0) + E(0,1) + E(1,0) - E(1,1)`.
pub fn chsh_value(b: &BipartiteBehavior) -> Result<f64> {
    if b.settings != (2, 2) || b.outcomes != (2, 2) {
        return Err(Error::DimensionMismatch("CHSH needs two binary settings per party".into()));
    }
    Ok(b.correlator(0, 0) + b.correlator(0, 1) + b.correlator(1, 0) - b.correlator(1, 1))
}

/// PR box: `a xor b = x and y` with uniform marginals.
pub fn pr_box() -> BipartiteBehavior {
    BipartiteBehavior::from_fn((2, 2), (2, 2), 1e-12, |a, b, x, y| if (a ^ b) == (x & y) { 0.5 } else { 0.0 })
        .expect("valid PR box")
}

/// Correlated behavior with uniform marginals and correlators `e[x][y]`.
pub fn from_correlators(e: [[f64; 2]; 2]) -> Result<BipartiteBehavior> {
    BipartiteBehavior::from_fn((2, 2), (2, 2), 1e-12, |a, b, x, y| {
        let sign = if a == b { 1.0 } else { -1.0 };
        (1.0 + sign * e[x][y]) / 4.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::check_boolean_embedding;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    fn quantum() -> BipartiteBehavior {
        let h = SQRT_2 / 2.0;
        from_correlators([[h, h], [h, -h]]).unwrap()
    }

    #[test]
    fn no_signalling_examples() {
        let product = BipartiteBehavior::from_fn((2, 2), (2, 2), 1e-12, |a, b, x, y| {
            let pa = [[0.3, 0.7], [0.6, 0.4]][x][a];
            let pb = [[0.2, 0.8], [0.5, 0.5]][y][b];
            pa * pb
        })
        .unwrap();
        let r = check_no_signalling(&product, 1e-12);
        assert!(r.pass && r.max_residual < 1e-15);
        assert!(check_no_signalling(&pr_box(), 1e-12).pass);
        // Alice's marginal for x=0 moves from 0.5 to 0.7 when y changes
        let signalling = BipartiteBehavior::from_fn((2, 2), (2, 2), 1e-12, |a, b, x, y| {
            let pa = if x == 0 && y == 1 { [0.7, 0.3][a] } else { 0.5 };
            pa * 0.5 + 0.0 * b as f64
        })
        .unwrap();
        let r = check_no_signalling(&signalling, 1e-9);
        assert!(!r.pass);
        assert!((r.max_residual - 0.2).abs() < 1e-12);
    }

    #[test]
    fn chsh_examples() {
        let zero = BipartiteBehavior::from_fn((2, 2), (2, 2), 1e-12, |a, b, _, _| if a == 0 && b == 0 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(chsh_value(&zero).unwrap(), 2.0);
        assert!((chsh_value(&pr_box()).unwrap() - 4.0).abs() < 1e-12);
        let noise = BipartiteBehavior::from_fn((2, 2), (2, 2), 1e-12, |_, _, _, _| 0.25).unwrap();
        assert_eq!(chsh_value(&noise).unwrap(), 0.0);
        assert!((chsh_value(&quantum()).unwrap() - 2.0 * SQRT_2).abs() < 1e-12);
        let bigger = BipartiteBehavior::from_fn((3, 2), (2, 2), 1e-12, |_, _, _, _| 0.25).unwrap();
        assert!(chsh_value(&bigger).is_err());
    }

    #[test]
    fn pr_box_is_nonlocal() {
        let d = local_decomposition(&pr_box(), 1e-9).unwrap();
        assert_eq!(d.status, EmbeddingStatus::NonEmbeddable);
        let w = d.witness.unwrap();
        assert!((w.margin - 2.0).abs() < 1e-9);
        assert!((w.value - w.bound - w.margin).abs() < 1e-12);
    }

    #[test]
    fn quantum_margin() {
        let d = local_decomposition(&quantum(), 1e-9).unwrap();
        assert_eq!(d.status, EmbeddingStatus::NonEmbeddable);
        assert!((d.witness.unwrap().margin - (2.0 * SQRT_2 - 2.0)).abs() < 1e-6);
    }

    #[test]
    fn larger_scenarios_and_caps() {
        let uniform = BipartiteBehavior::from_fn((3, 3), (3, 3), 1e-12, |_, _, _, _| 1.0 / 9.0).unwrap();
        let d = local_decomposition(&uniform, 1e-9).unwrap();
        assert_eq!(d.status, EmbeddingStatus::Embeddable);
        let big = BipartiteBehavior::from_fn((4, 2), (2, 2), 1e-12, |_, _, _, _| 0.25).unwrap();
        assert!(matches!(local_decomposition(&big, 1e-9), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn file_roundtrip_and_errors() {
        let file = pr_box().to_file();
        let json = serde_json::to_string(&file).unwrap();
        assert_eq!(parse_bipartite(&json).unwrap(), pr_box());
        let mut missing = file.clone();
        missing.tables.remove("1,1");
        assert!(matches!(BipartiteBehavior::from_file(missing), Err(Error::Schema { .. })));
        let mut extra = file;
        extra.tables.insert("2,0".into(), vec![0.25; 4]);
        assert!(matches!(BipartiteBehavior::from_file(extra), Err(Error::Schema { .. })));
    }

    fn mixture(weights: &[f64]) -> LocalModel {
        let (strategies, _) = local_polytope((2, 2), (2, 2)).unwrap();
        let total: f64 = weights.iter().sum();
        LocalModel {
            strategies,
            prior: weights.iter().map(|w| w / total).collect(),
        }
    }

    proptest! {
        #[test]
        fn local_mixtures_are_recovered(w in proptest::collection::vec(0.0f64..1.0, 16)) {
            prop_assume!(w.iter().sum::<f64>() > 0.1);
            let model = mixture(&w);
            let b = model.induced((2, 2), (2, 2)).unwrap();
            prop_assert!(check_no_signalling(&b, 1e-12).max_residual <= 1e-12);
            let d = local_decomposition(&b, 1e-9).unwrap();
            prop_assert!(d.status != EmbeddingStatus::NonEmbeddable);
            if let Some(m) = &d.model {
                let again = m.induced((2, 2), (2, 2)).unwrap();
                let gap = again.cells().iter().zip(b.cells()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                prop_assert!(gap <= 1e-9);
            }
            prop_assert!(chsh_value(&b).unwrap().abs() <= 2.0 + 1e-9);
        }

        #[test]
        fn bipartite_and_scenario_views_agree(w in proptest::collection::vec(0.0f64..1.0, 16), mix in 0.0f64..1.0) {
            prop_assume!(w.iter().sum::<f64>() > 0.1);
            let local = mixture(&w).induced((2, 2), (2, 2)).unwrap();
            let cells: Vec<f64> = local.cells().iter().zip(pr_box().cells()).map(|(l, p)| (1.0 - mix) * l + mix * p).collect();
            let b = BipartiteBehavior::new((2, 2), (2, 2), cells.chunks(4).map(|c| Distribution::new(c.to_vec(), 1e-9).unwrap()).collect()).unwrap();
            let bell = local_decomposition(&b, 1e-9).unwrap();
            let emb = check_boolean_embedding(&b.to_scenario().unwrap(), 1e-9).unwrap();
            prop_assert_eq!(bell.status, emb.status);
            if let Some(w) = &bell.witness {
                prop_assert!((w.value - w.bound - w.margin).abs() < 1e-12);
            }
        }
    }
}
