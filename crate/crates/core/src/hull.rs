//! Membership of a cell vector in the convex hull of deterministic vertices.
//!
//! Both the global-assignment embedding question and Bell locality reduce to
//! the same polytope: each vertex selects exactly one cell in every block
//! (context), and a target table lies in the hull iff it is a convex mixture
//! of vertices. Two linear programs are used:
//!
//! * an l1 projection, whose optimum is the l1 distance from the target to the
//!   hull and whose duals form a separating functional with coefficients in
//!   `[-1, 1]`;
//! * a depth program measuring how far the target sits inside the hull along
//!   the ray from the hull centroid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpOutcome};

/// Cap on the centroid gauge scale; targets at the centroid report depth `1 - 1/DEPTH_CAP`.
const DEPTH_CAP: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HullProblem {
    /// Number of cells in each block.
    pub blocks: Vec<usize>,
    /// For every vertex, the global cell index it selects in each block.
    pub vertices: Vec<Vec<usize>>,
}

/// A linear functional over cells together with its value on a target and
/// its maximum over the hull vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub coefficients: Vec<f64>,
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct Projection {
    /// l1 distance from the target to the hull.
    pub distance: f64,
    /// Vertex weights of the nearest hull point.
    pub weights: Vec<f64>,
    pub witness: Witness,
}

impl HullProblem {
    pub fn new(blocks: Vec<usize>, vertices: Vec<Vec<usize>>) -> Result<Self> {
        let cells: usize = blocks.iter().sum();
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut acc = 0;
        for &b in &blocks {
            offsets.push(acc);
            acc += b;
        }
        for v in &vertices {
            if v.len() != blocks.len() {
                return Err(Error::DimensionMismatch("vertex does not select one cell per block".into()));
            }
            for (k, &cell) in v.iter().enumerate() {
                if cell >= cells || cell < offsets[k] || cell >= offsets[k] + blocks[k] {
                    return Err(Error::DimensionMismatch(format!("vertex cell {cell} outside block {k}")));
                }
            }
        }
        if vertices.is_empty() {
            return Err(Error::DimensionMismatch("hull without vertices".into()));
        }
        Ok(HullProblem { blocks, vertices })
    }

    pub fn cells(&self) -> usize {
        self.blocks.iter().sum()
    }

    /// Value of a functional on a vertex.
    pub fn eval_vertex(&self, coefficients: &[f64], vertex: usize) -> f64 {
        self.vertices[vertex].iter().map(|&c| coefficients[c]).sum()
    }

    /// Cell vector induced by vertex weights.
    pub fn induced(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cells()];
        for (v, &w) in self.vertices.iter().zip(weights) {
            if w != 0.0 {
                for &c in v {
                    out[c] += w;
                }
            }
        }
        out
    }

    /// Max absolute gap between the induced vector and `target`.
    pub fn reproduction_residual(&self, weights: &[f64], target: &[f64]) -> f64 {
        self.induced(weights)
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn witness(&self, coefficients: Vec<f64>, target: &[f64]) -> Witness {
        let value = coefficients.iter().zip(target).map(|(a, b)| a * b).sum::<f64>();
        let bound = (0..self.vertices.len())
            .map(|k| self.eval_vertex(&coefficients, k))
            .fold(f64::NEG_INFINITY, f64::max);
        Witness {
            coefficients,
            value,
            bound,
            margin: value - bound,
        }
    }

    fn check_target(&self, target: &[f64]) -> Result<()> {
        if target.len() != self.cells() {
            return Err(Error::DimensionMismatch(format!(
                "target has {} cells, hull has {}",
                target.len(),
                self.cells()
            )));
        }
        Ok(())
    }

    /// Nearest hull point in l1 norm plus the dual separating functional.
    pub fn project(&self, target: &[f64]) -> Result<Projection> {
        self.check_target(target)?;
        let n = self.cells();
        let k = self.vertices.len();
        let cols = k + 2 * n;
        let mut rows = vec![vec![0.0; cols]; n + 1];
        for (j, v) in self.vertices.iter().enumerate() {
            for &c in v {
                rows[c][j] = 1.0;
            }
            rows[n][j] = 1.0;
        }
        for i in 0..n {
            rows[i][k + i] = 1.0;
            rows[i][k + n + i] = -1.0;
        }
        let mut objective = vec![0.0; cols];
        for c in objective.iter_mut().skip(k) {
            *c = 1.0;
        }
        let mut rhs = target.to_vec();
        rhs.push(1.0);
        let sol = match LinearProgram::new(objective, rows, rhs).solve()? {
            LpOutcome::Optimal(s) => s,
            other => return Err(Error::Solver(format!("l1 projection returned {other:?}"))),
        };
        let coefficients: Vec<f64> = sol.duals[..n]
            .iter()
            .map(|&y| if y.abs() < 1e-12 { 0.0 } else { y.clamp(-1.0, 1.0) })
            .collect();
        let weights = normalize_weights(&sol.x[..k]);
        Ok(Projection {
            distance: sol.objective.max(0.0),
            weights,
            witness: self.witness(coefficients, target),
        })
    }

    /// Largest `s` with `centroid + s (target - centroid)` inside the hull,
    /// capped at `DEPTH_CAP`. The target is inside iff `s >= 1`.
    pub fn centroid_scale(&self, target: &[f64]) -> Result<f64> {
        self.check_target(target)?;
        let n = self.cells();
        let k = self.vertices.len();
        let centroid = self.induced(&vec![1.0 / k as f64; k]);
        let cols = k + 2;
        let mut rows = vec![vec![0.0; cols]; n + 2];
        for (j, v) in self.vertices.iter().enumerate() {
            for &c in v {
                rows[c][j] = 1.0;
            }
            rows[n][j] = 1.0;
        }
        for i in 0..n {
            rows[i][k] = -(target[i] - centroid[i]);
        }
        rows[n + 1][k] = 1.0;
        rows[n + 1][k + 1] = 1.0;
        let mut rhs = centroid;
        rhs.push(1.0);
        rhs.push(DEPTH_CAP);
        let mut objective = vec![0.0; cols];
        objective[k] = -1.0;
        match LinearProgram::new(objective, rows, rhs).solve()? {
            LpOutcome::Optimal(s) => Ok(s.x[k]),
            other => Err(Error::Solver(format!("depth program returned {other:?}"))),
        }
    }

    /// Signed depth in `[0, 1)` for targets inside the hull: `1 - 1/s` with
    /// `s` the centroid scale. Zero on the boundary.
    pub fn depth(&self, target: &[f64]) -> Result<f64> {
        let s = self.centroid_scale(target)?;
        Ok(if s >= 1.0 { 1.0 - 1.0 / s } else { 1.0 - 1.0 / s.max(1e-300) })
    }
}

fn normalize_weights(raw: &[f64]) -> Vec<f64> {
    let mut w: Vec<f64> = raw.iter().map(|&x| if x < 1e-15 { 0.0 } else { x }).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        for x in w.iter_mut() {
            *x /= total;
        }
    }
    w
}
