//! Plain-loop reference implementations used as independent oracles, plus
//! small builders shared by the integration tests.
#![allow(dead_code)]

use discalign::{Framework, InstanceSource, RelationInstance, RelationKind};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0))
}

pub fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Instance-centred contrastive loss, written out term by term.
pub fn icl_ref(x: &[Vec<f64>], labels: &[usize], t: &[Vec<f64>], tau: f64) -> f64 {
    let mut total = 0.0;
    for (i, xi) in x.iter().enumerate() {
        let num = (cos(xi, &t[labels[i]]) / tau).exp();
        let den: f64 = t.iter().map(|tl| (cos(xi, tl) / tau).exp()).sum();
        total += -(num / den).ln();
    }
    total / x.len() as f64
}

/// Label-centred contrastive loss with positives absent from the denominator.
pub fn lcl_ref(x: &[Vec<f64>], labels: &[usize], t: &[Vec<f64>], tau: f64) -> f64 {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort();
    classes.dedup();
    let mut total = 0.0;
    let mut counted = 0;
    for &c in &classes {
        let negatives: Vec<usize> = (0..x.len()).filter(|&i| labels[i] != c).collect();
        if negatives.is_empty() {
            continue;
        }
        counted += 1;
        let den: f64 = negatives.iter().map(|&n| (cos(&x[n], &t[c]) / tau).exp()).sum();
        for p in (0..x.len()).filter(|&i| labels[i] == c) {
            let num = (cos(&x[p], &t[c]) / tau).exp();
            total += -(num / den).ln();
        }
    }
    if counted == 0 {
        0.0
    } else {
        total / counted as f64
    }
}

/// Label-embedding separation loss: softmax over each row of the label
/// cosine matrix, cross-entropy against the identity.
pub fn lec_ref(t: &[Vec<f64>], tau: f64) -> f64 {
    let k = t.len();
    let mut total = 0.0;
    for i in 0..k {
        let den: f64 = (0..k).map(|j| (cos(&t[i], &t[j]) / tau).exp()).sum();
        total += -((cos(&t[i], &t[i]) / tau).exp() / den).ln();
    }
    total / k as f64
}

pub fn ice_ref(logits: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.iter().zip(labels) {
        let den: f64 = row.iter().map(|v| v.exp()).sum();
        total += -(row[y].exp() / den).ln();
    }
    total / logits.len() as f64
}

/// Min-max normalised cosine matrix between proxies and label rows; `None`
/// for constant rows.
pub fn normalised_rows(proxies: &[Vec<f64>], table: &[Vec<f64>]) -> Vec<Option<Vec<f64>>> {
    proxies
        .iter()
        .map(|p| {
            let raw: Vec<f64> = table.iter().map(|t| cos(p, t)).collect();
            let mut lo = raw[0];
            let mut hi = raw[0];
            for &v in &raw {
                if v < lo {
                    lo = v;
                }
                if v > hi {
                    hi = v;
                }
            }
            if hi == lo {
                None
            } else {
                Some(raw.iter().map(|v| (v - lo) / (hi - lo)).collect())
            }
        })
        .collect()
}

pub fn brute_force_argmax(x: &[f64], table: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (j, row) in table.iter().enumerate() {
        let s = cos(x, row);
        if s > best_score {
            best = j;
            best_score = s;
        }
    }
    best
}

/// Norm-based relative error between two gradient vectors.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na + nb < 1e-12 {
        0.0
    } else {
        diff / (na + nb)
    }
}

/// Central finite-difference gradient of `f` over every entry of `m`.
pub fn fd_grad(m: &Array2<f64>, mut f: impl FnMut(&Array2<f64>) -> f64) -> Vec<f64> {
    let h = 1e-6;
    let mut out = Vec::with_capacity(m.len());
    let mut probe = m.clone();
    for idx in 0..m.len() {
        let (r, c) = (idx / m.ncols(), idx % m.ncols());
        let orig = probe[[r, c]];
        probe[[r, c]] = orig + h;
        let up = f(&probe);
        probe[[r, c]] = orig - h;
        let down = f(&probe);
        probe[[r, c]] = orig;
        out.push((up - down) / (2.0 * h));
    }
    out
}

pub fn instance(arg1: &str, arg2: &str, label: usize, doc_id: &str) -> RelationInstance {
    RelationInstance {
        arg1: arg1.into(),
        arg2: arg2.into(),
        label,
        framework: Framework::Pdtb,
        relation_kind: RelationKind::Explicit,
        connective: None,
        doc_id: doc_id.into(),
        source: InstanceSource::Original,
    }
}
