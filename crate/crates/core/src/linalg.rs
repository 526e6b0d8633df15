//! Small numeric helpers: cosine similarity with gradients, softmax, log-sum-exp.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

fn checked_norm(v: ArrayView1<f64>, what: &str) -> Result<f64> {
    let n = norm(v);
    if n > 0.0 && n.is_finite() {
        Ok(n)
    } else {
        Err(Error::ZeroNorm(what.to_string()))
    }
}

pub fn cosine(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", u.len(), v.len())));
    }
    let nu = checked_norm(u, "left operand")?;
    let nv = checked_norm(v, "right operand")?;
    Ok(u.dot(&v) / (nu * nv))
}

/// Cosine similarity together with its gradients with respect to both operands.
///
/// d cos / du = v / (|u||v|) - cos * u / |u|^2
pub fn cosine_with_grad(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<(f64, Array1<f64>, Array1<f64>)> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", u.len(), v.len())));
    }
    let nu = checked_norm(u, "left operand")?;
    let nv = checked_norm(v, "right operand")?;
    let c = u.dot(&v) / (nu * nv);
    let gu = &v / (nu * nv) - &u * (c / (nu * nu));
    let gv = &u / (nu * nv) - &v * (c / (nv * nv));
    Ok((c, gu, gv))
}

/// `out[i][j] = cos(a_i, b_j)`.
pub fn cosine_matrix(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "row dimension {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ra) in a.rows().into_iter().enumerate() {
        for (j, rb) in b.rows().into_iter().enumerate() {
            out[[i, j]] = cosine(ra, rb)?;
        }
    }
    Ok(out)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log_sum_exp(xs) - xs[target]` without cancellation when `xs[target]` is
/// the largest entry, so near-zero losses keep their relative precision.
pub fn neg_log_softmax(xs: &[f64], target: usize) -> f64 {
    let t = xs[target];
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if t < max {
        return log_sum_exp(xs) - t;
    }
    let rest: f64 = xs
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target)
        .map(|(_, x)| (x - t).exp())
        .sum();
    rest.ln_1p()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| (x - lse).exp()).collect()
}

/// Index of the maximum, lowest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
