//! Shannon entropy and (conditional) mutual information in bits.

use crate::error::{Error, Result};

const JOINT_TOL: f64 = 1e-9;

fn check_weights<'a>(weights: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<()> {
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::InvalidDistribution {
                location: what.to_string(),
                reason: format!("entry {w} is negative or not finite"),
            });
        }
        total += w;
    }
    if (total - 1.0).abs() > JOINT_TOL {
        return Err(Error::InvalidDistribution {
            location: what.to_string(),
            reason: format!("sums to {total}"),
        });
    }
    Ok(())
}

fn plogp_sum<'a>(weights: impl IntoIterator<Item = &'a f64>) -> f64 {
    -weights
        .into_iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

/// Shannon entropy, base 2, with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    check_weights(p, "distribution")?;
    Ok(plogp_sum(p).max(0.0))
}

fn rectangular(joint: &[Vec<f64>]) -> Result<usize> {
    let cols = joint.first().map_or(0, Vec::len);
    if joint.iter().any(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch("joint rows have different lengths".into()));
    }
    Ok(cols)
}

/// `I(X;Y) = H(X) + H(Y) - H(X,Y)` for a joint indexed `[x][y]`; rounding
/// below zero is clipped.
pub fn mutual_information(joint: &[Vec<f64>]) -> Result<f64> {
    let cols = rectangular(joint)?;
    check_weights(joint.iter().flatten(), "joint")?;
    let rows: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<f64> = (0..cols).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let i = plogp_sum(&rows) + plogp_sum(&col) - plogp_sum(joint.iter().flatten());
    Ok(i.max(0.0))
}

/// `I(C;O|L) = sum_l p(l) I(C;O | L=l)` for a joint indexed `[c][o][l]`.
pub fn conditional_mutual_information(joint: &[Vec<Vec<f64>>]) -> Result<f64> {
    let n_o = joint.first().map_or(0, Vec::len);
    let n_l = joint.first().and_then(|r| r.first()).map_or(0, Vec::len);
    if joint.iter().any(|r| r.len() != n_o || r.iter().any(|v| v.len() != n_l)) {
        return Err(Error::DimensionMismatch("conditional joint is not rectangular".into()));
    }
    check_weights(joint.iter().flatten().flatten(), "joint")?;
    // I(C;O|L) = H(C,L) + H(O,L) - H(C,O,L) - H(L)
    let mut h_cl = Vec::new();
    for r in joint {
        for l in 0..n_l {
            h_cl.push(r.iter().map(|v| v[l]).sum::<f64>());
        }
    }
    let mut h_ol = Vec::new();
    for o in 0..n_o {
        for l in 0..n_l {
            h_ol.push(joint.iter().map(|r| r[o][l]).sum::<f64>());
        }
    }
    let h_l: Vec<f64> = (0..n_l)
        .map(|l| joint.iter().flat_map(|r| r.iter().map(move |v| v[l])).sum())
        .collect();
    let i = plogp_sum(&h_cl) + plogp_sum(&h_ol) - plogp_sum(joint.iter().flatten().flatten()) - plogp_sum(&h_l);
    Ok(i.max(0.0))
}
