//! Dense two-phase simplex for small standard-form linear programs.
//!
//! Solves `min c·x  s.t.  A x = b, x >= 0` and returns the primal solution
//! together with the equality-row duals, which the hull routines turn into
//! separating functionals. Problems here are desk sized (hundreds of rows,
//! a few thousand columns), so a dense tableau is adequate.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-11;
const PHASE_ONE_TOL: f64 = 1e-9;
/// Degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 50;

#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual value per equality row; `c - A^T y >= 0` at optimality.
    pub duals: Vec<f64>,
}

#[derive(Clone, Debug)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

struct Tableau {
    m: usize,
    n: usize,
    /// m rows of width n + m + 1 (originals, artificials, rhs).
    t: Vec<Vec<f64>>,
    /// Reduced costs plus negated objective value in the last slot.
    obj: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn width(&self) -> usize {
        self.n + self.m + 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width();
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for k in 0..w {
                    r[k] -= f * pivot_row[k];
                }
                r[col] = 0.0;
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for k in 0..w {
                self.obj[k] -= f * pivot_row[k];
            }
            self.obj[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Runs simplex iterations over columns `< allowed`. Returns false if unbounded.
    fn optimize(&mut self, allowed: usize, max_iter: usize) -> Result<bool> {
        let rhs = self.width() - 1;
        let mut degenerate = 0;
        for _ in 0..max_iter {
            let bland = degenerate > DEGENERATE_LIMIT;
            let mut enter = None;
            let mut best = -COST_EPS;
            for j in 0..allowed {
                let d = self.obj[j];
                if d < -COST_EPS {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if d < best {
                        best = d;
                        enter = Some(j);
                    }
                }
            }
            let Some(col) = enter else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.t[i][col];
                if a > PIVOT_EPS {
                    let ratio = self.t[i][rhs] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((row, ratio)) = leave else {
                return Ok(false);
            };
            if ratio.abs() < 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(row, col);
        }
        Err(Error::Solver("simplex iteration limit reached".into()))
    }
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> Self {
        LinearProgram {
            objective,
            rows,
            rhs,
        }
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        let m = self.rows.len();
        let n = self.objective.len();
        if self.rhs.len() != m || self.rows.iter().any(|r| r.len() != n) {
            return Err(Error::Solver("inconsistent linear program dimensions".into()));
        }
        let w = n + m + 1;
        let mut sign = vec![1.0; m];
        let mut t = Vec::with_capacity(m);
        for i in 0..m {
            if self.rhs[i] < 0.0 {
                sign[i] = -1.0;
            }
            let mut row = vec![0.0; w];
            for j in 0..n {
                row[j] = sign[i] * self.rows[i][j];
            }
            row[n + i] = 1.0;
            row[w - 1] = sign[i] * self.rhs[i];
            t.push(row);
        }
        // phase one: minimise the sum of artificials
        let mut obj = vec![0.0; w];
        for row in &t {
            for j in 0..n {
                obj[j] -= row[j];
            }
            obj[w - 1] -= row[w - 1];
        }
        let mut tab = Tableau {
            m,
            n,
            t,
            obj,
            basis: (n..n + m).collect(),
        };
        let max_iter = 50 * (n + m) + 1000;
        tab.optimize(n, max_iter)?;
        let infeasibility = -tab.obj[w - 1];
        if infeasibility > PHASE_ONE_TOL * (1.0 + self.rhs.iter().map(|v| v.abs()).sum::<f64>()) {
            return Ok(LpOutcome::Infeasible);
        }
        // drive remaining artificials out of the basis where possible
        for i in 0..m {
            if tab.basis[i] >= n {
                if let Some(j) = (0..n).find(|&j| tab.t[i][j].abs() > 1e-9) {
                    tab.pivot(i, j);
                }
            }
        }
        // phase two
        let mut obj = vec![0.0; w];
        obj[..n].copy_from_slice(&self.objective);
        for i in 0..m {
            let cb = if tab.basis[i] < n { self.objective[tab.basis[i]] } else { 0.0 };
            if cb != 0.0 {
                for k in 0..w {
                    obj[k] -= cb * tab.t[i][k];
                }
            }
        }
        tab.obj = obj;
        if !tab.optimize(n, max_iter)? {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![0.0; n];
        for i in 0..m {
            if tab.basis[i] < n {
                x[tab.basis[i]] = tab.t[i][w - 1].max(0.0);
            }
        }
        let objective = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        // reduced cost of artificial i (cost 0) is -y'_i for the sign-adjusted row
        let duals = (0..m).map(|i| -sign[i] * tab.obj[n + i]).collect();
        Ok(LpOutcome::Optimal(LpSolution { x, objective, duals }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(lp: &LinearProgram) -> LpSolution {
        match lp.solve().unwrap() {
            LpOutcome::Optimal(s) => s,
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn small_textbook_problem() {
        // max 3x + 2y  s.t. x + y <= 4, x + 3y <= 6, x <= 3
        let lp = LinearProgram::new(
            vec![-3.0, -2.0, 0.0, 0.0, 0.0],
            vec![
                vec![1.0, 1.0, 1.0, 0.0, 0.0],
                vec![1.0, 3.0, 0.0, 1.0, 0.0],
                vec![1.0, 0.0, 0.0, 0.0, 1.0],
            ],
            vec![4.0, 6.0, 3.0],
        );
        let s = optimal(&lp);
        assert!((s.objective + 11.0).abs() < 1e-9);
        assert!((s.x[0] - 3.0).abs() < 1e-9 && (s.x[1] - 1.0).abs() < 1e-9);
        // strong duality
        let dual_obj: f64 = s.duals.iter().zip(&lp.rhs).map(|(y, b)| y * b).sum();
        assert!((dual_obj - s.objective).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        let lp = LinearProgram::new(
            vec![0.0, 0.0],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![1.0, 2.0],
        );
        assert!(matches!(lp.solve().unwrap(), LpOutcome::Infeasible));
    }

    #[test]
    fn detects_unbounded() {
        let lp = LinearProgram::new(vec![-1.0, 0.0], vec![vec![1.0, -1.0]], vec![0.0]);
        assert!(matches!(lp.solve().unwrap(), LpOutcome::Unbounded));
    }

    #[test]
    fn negative_rhs_and_redundant_rows() {
        // -x - y = -1 twice (redundant), min x + 2y
        let lp = LinearProgram::new(
            vec![1.0, 2.0],
            vec![vec![-1.0, -1.0], vec![-1.0, -1.0]],
            vec![-1.0, -1.0],
        );
        let s = optimal(&lp);
        assert!((s.objective - 1.0).abs() < 1e-12);
        let dual_obj: f64 = s.duals.iter().zip(&lp.rhs).map(|(y, b)| y * b).sum();
        assert!((dual_obj - 1.0).abs() < 1e-9);
        for j in 0..2 {
            let reduced = lp.objective[j] - (0..2).map(|i| s.duals[i] * lp.rows[i][j]).sum::<f64>();
            assert!(reduced >= -1e-9);
        }
    }
}
