//! Exact-rational hull membership by enumeration of basic solutions.
//!
//! Used as an oracle for the floating-point LP path. Every `f64` is a dyadic
//! rational, so targets are scaled to integers by a common power of two and
//! each candidate basis is solved with its integer adjugate. Arithmetic runs
//! in checked `i128` and falls back to `BigInt` on overflow.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Float, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::hull::HullProblem;

pub const MAX_VERTICES: usize = 16;
pub const MAX_CELLS: usize = 64;

struct Basis {
    cols: Vec<usize>,
    det: i128,
    /// `adj[i][j]` with `B * adj = det * I`.
    adj: Vec<Vec<i128>>,
}

pub struct ExactHullOracle {
    /// Dense 0/1 constraint matrix (cells plus a normalization row) by vertex.
    matrix: Vec<Vec<i64>>,
    /// Independent rows spanning the row space.
    rows: Vec<usize>,
    bases: Vec<Basis>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactMembership {
    pub member: bool,
    /// Best over basic solutions of the smallest component: `>= 0` iff member.
    /// `None` when the target is outside the affine span of the vertices.
    pub margin: Option<BigRational>,
}

impl ExactHullOracle {
    pub fn new(problem: &HullProblem) -> Result<Self> {
        let k = problem.vertices.len();
        let n = problem.cells();
        if k > MAX_VERTICES {
            return Err(Error::CapExceeded {
                what: "vertices for exact enumeration".into(),
                size: k as u128,
                cap: MAX_VERTICES as u128,
            });
        }
        if n > MAX_CELLS {
            return Err(Error::CapExceeded {
                what: "cells for exact enumeration".into(),
                size: n as u128,
                cap: MAX_CELLS as u128,
            });
        }
        let mut matrix = vec![vec![0i64; k]; n + 1];
        for (j, v) in problem.vertices.iter().enumerate() {
            for &c in v {
                matrix[c][j] = 1;
            }
            matrix[n][j] = 1;
        }
        let rows = independent_rows(&matrix);
        let r = rows.len();
        let mut bases = Vec::new();
        for cols in combinations(k, r) {
            let b: Vec<Vec<i128>> = rows
                .iter()
                .map(|&i| cols.iter().map(|&j| matrix[i][j] as i128).collect())
                .collect();
            if let Some((det, adj)) = adjugate(&b) {
                bases.push(Basis { cols, det, adj });
            }
        }
        Ok(ExactHullOracle { matrix, rows, bases })
    }

    pub fn membership(&self, target: &[f64]) -> Result<ExactMembership> {
        let n = self.matrix.len() - 1;
        if target.len() != n {
            return Err(Error::DimensionMismatch("target length".into()));
        }
        let (scaled, denom_exp) = dyadic_integers(target)?;
        let scale = BigInt::one() << denom_exp;
        let mut full: Vec<BigInt> = scaled;
        full.push(scale.clone());
        let small: Option<Vec<i128>> = full.iter().map(|v| v.to_i128()).collect();
        if let Some(small) = small {
            if let Some(res) = self.run::<i128>(&small, &scale) {
                return Ok(res);
            }
        }
        Ok(self
            .run::<BigInt>(&full, &scale)
            .expect("BigInt arithmetic cannot overflow"))
    }

    fn run<T: ExactInt>(&self, target: &[T], scale: &BigInt) -> Option<ExactMembership> {
        let mut consistent: Option<bool> = None;
        let mut best: Option<BigRational> = None;
        for basis in &self.bases {
            let r = self.rows.len();
            // z = adj * t_R = det * scale * x
            let mut z = Vec::with_capacity(r);
            for i in 0..r {
                let mut acc = T::zero();
                for (j, &row) in self.rows.iter().enumerate() {
                    let a = basis.adj[i][j];
                    if a != 0 {
                        acc = acc.checked_add_(&T::from_i128(a)?.checked_mul_(&target[row])?)?;
                    }
                }
                z.push(acc);
            }
            if consistent.is_none() {
                let det = T::from_i128(basis.det)?;
                let mut ok = true;
                for (i, row) in self.matrix.iter().enumerate() {
                    let mut acc = T::zero();
                    for (zj, &col) in z.iter().zip(&basis.cols) {
                        if row[col] != 0 {
                            acc = acc.checked_add_(zj)?;
                        }
                    }
                    if acc != det.checked_mul_(&target[i])? {
                        ok = false;
                        break;
                    }
                }
                consistent = Some(ok);
                if !ok {
                    return Some(ExactMembership {
                        member: false,
                        margin: None,
                    });
                }
            }
            let denom = BigInt::from(basis.det) * scale;
            let min = z
                .iter()
                .map(|v| BigRational::new(v.to_bigint(), denom.clone()))
                .min()
                .expect("non-empty basis");
            if best.as_ref().is_none_or(|b| &min > b) {
                best = Some(min);
            }
        }
        let margin = best?;
        Some(ExactMembership {
            member: !margin.is_negative(),
            margin: Some(margin),
        })
    }
}

/// Exact integer images `v * 2^e` of the targets and the shared exponent `e`.
fn dyadic_integers(values: &[f64]) -> Result<(Vec<BigInt>, u32)> {
    let mut parts = Vec::with_capacity(values.len());
    let mut max_exp: u32 = 0;
    for &v in values {
        if !v.is_finite() {
            return Err(Error::InvalidDistribution {
                location: "target".into(),
                reason: "non-finite value".into(),
            });
        }
        let (mut mantissa, mut exponent, sign) = Float::integer_decode(v);
        if mantissa == 0 {
            parts.push((<BigInt as Zero>::zero(), 0i32));
            continue;
        }
        let tz = mantissa.trailing_zeros();
        mantissa >>= tz;
        exponent += tz as i16;
        let m = BigInt::from(mantissa) * sign as i64;
        if exponent < 0 {
            max_exp = max_exp.max((-exponent) as u32);
        }
        parts.push((m, exponent as i32));
    }
    let scaled = parts
        .into_iter()
        .map(|(m, e)| {
            let shift = e + max_exp as i32;
            m << (shift as usize)
        })
        .collect();
    Ok((scaled, max_exp))
}

fn independent_rows(matrix: &[Vec<i64>]) -> Vec<usize> {
    let mut echelon: Vec<Vec<BigRational>> = Vec::new();
    let mut pivots: Vec<usize> = Vec::new();
    let mut chosen = Vec::new();
    for (i, row) in matrix.iter().enumerate() {
        let mut v: Vec<BigRational> = row.iter().map(|&x| BigRational::from_integer(x.into())).collect();
        for (e, &p) in echelon.iter().zip(&pivots) {
            if !v[p].is_zero() {
                let f = v[p].clone() / e[p].clone();
                for (x, y) in v.iter_mut().zip(e) {
                    *x -= f.clone() * y;
                }
            }
        }
        if let Some(p) = v.iter().position(|x| !x.is_zero()) {
            echelon.push(v);
            pivots.push(p);
            chosen.push(i);
        }
    }
    chosen
}

/// Fraction-free Gauss-Jordan on `[B | I]`. Returns `(d, R)` with `B R = d I`.
fn adjugate(b: &[Vec<i128>]) -> Option<(i128, Vec<Vec<i128>>)> {
    let r = b.len();
    let mut m: Vec<Vec<i128>> = b
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut full = row.clone();
            full.extend((0..r).map(|j| i128::from(i == j)));
            full
        })
        .collect();
    let mut prev: i128 = 1;
    for k in 0..r {
        let p = (k..r).find(|&i| m[i][k] != 0)?;
        m.swap(k, p);
        for i in 0..r {
            if i == k {
                continue;
            }
            for j in 0..2 * r {
                if j == k {
                    continue;
                }
                let num = m[k][k] * m[i][j] - m[i][k] * m[k][j];
                debug_assert!(num.is_multiple_of(&prev));
                m[i][j] = num / prev;
            }
            m[i][k] = 0;
        }
        prev = m[k][k];
    }
    // the diagonal now holds a common value d
    let d = m[0][0];
    if m.iter().enumerate().any(|(i, row)| row[i] != d) || d == 0 {
        return None;
    }
    let adj: Vec<Vec<i128>> = m.iter().map(|row| row[r..].to_vec()).collect();
    for i in 0..r {
        for j in 0..r {
            let s: i128 = (0..r).map(|k| b[i][k] * adj[k][j]).sum();
            if s != if i == j { d } else { 0 } {
                return None;
            }
        }
    }
    Some((d, adj))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

trait ExactInt: Clone + PartialEq + Sized {
    fn zero() -> Self;
    fn from_i128(v: i128) -> Option<Self>;
    fn checked_add_(&self, o: &Self) -> Option<Self>;
    fn checked_mul_(&self, o: &Self) -> Option<Self>;
    fn to_bigint(&self) -> BigInt;
}

impl ExactInt for i128 {
    fn zero() -> Self {
        0
    }
    fn from_i128(v: i128) -> Option<Self> {
        Some(v)
    }
    fn checked_add_(&self, o: &Self) -> Option<Self> {
        self.checked_add(*o)
    }
    fn checked_mul_(&self, o: &Self) -> Option<Self> {
        self.checked_mul(*o)
    }
    fn to_bigint(&self) -> BigInt {
        BigInt::from(*self)
    }
}

impl ExactInt for BigInt {
    fn zero() -> Self {
        Zero::zero()
    }
    fn from_i128(v: i128) -> Option<Self> {
        Some(BigInt::from(v))
    }
    fn checked_add_(&self, o: &Self) -> Option<Self> {
        Some(self + o)
    }
    fn checked_mul_(&self, o: &Self) -> Option<Self> {
        Some(self * o)
    }
    fn to_bigint(&self) -> BigInt {
        self.clone()
    }
}
