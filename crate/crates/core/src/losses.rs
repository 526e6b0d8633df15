//! Training objectives over a batch of input representations and a label
//! embedding table.
//!
//! Every loss returns its value together with analytic gradients so the
//! trainer can backpropagate without an autodiff engine:
//!
//! - ICL, instance-centred contrastive loss: softmax over the cosine
//!   similarities between an input and all `k` label embeddings.
//! - LCL, label-centred contrastive loss: each in-batch class anchor scores its
//!   positives against the in-batch negatives. The positives are not part of the
//!   denominator unless `include_positives` is set, so the value can be negative.
//! - LEC, label-embedding cross-entropy: row-wise softmax over the label-label
//!   cosine matrix with identity targets.
//! - ICE, ordinary cross-entropy over classifier-head logits.
//!
//! Cosine similarity with a zero vector is an error, never silently zero.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cosine_with_grad, log_sum_exp, neg_log_softmax, softmax};
use crate::types::{LossToggles, RelationTaxonomy};

/// Borrowed view of one batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchTensors<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
    pub table: ArrayView2<'a, f64>,
    pub temperature: f64,
}

impl<'a> BatchTensors<'a> {
    pub fn new(
        inputs: ArrayView2<'a, f64>,
        labels: &'a [usize],
        table: ArrayView2<'a, f64>,
        temperature: f64,
    ) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::Empty("batch has no instances".into()));
        }
        if inputs.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} inputs but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        if inputs.ncols() != table.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "input dimension {} vs label dimension {}",
                inputs.ncols(),
                table.ncols()
            )));
        }
        let k = table.nrows();
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange { label: bad, k });
        }
        if !(temperature > 0.0) {
            return Err(Error::InvalidConfig(format!("temperature must be positive, got {temperature}")));
        }
        Ok(BatchTensors {
            inputs,
            labels,
            table,
            temperature,
        })
    }

    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn k(&self) -> usize {
        self.table.nrows()
    }
}

/// A loss value with gradients w.r.t. the batch inputs and the label table.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub value: f64,
    pub d_inputs: Array2<f64>,
    pub d_table: Array2<f64>,
    /// Set when no in-batch class had any negative (LCL only); the value is 0.
    pub no_negatives: bool,
}

impl LossGrad {
    fn zeros(batch: &BatchTensors<'_>) -> Self {
        LossGrad {
            value: 0.0,
            d_inputs: Array2::zeros(batch.inputs.raw_dim()),
            d_table: Array2::zeros(batch.table.raw_dim()),
            no_negatives: false,
        }
    }

    fn scale(mut self, factor: f64) -> Self {
        self.value *= factor;
        self.d_inputs *= factor;
        self.d_table *= factor;
        self
    }

    fn add(mut self, other: &LossGrad) -> Self {
        self.value += other.value;
        self.d_inputs += &other.d_inputs;
        self.d_table += &other.d_table;
        self
    }
}

pub fn icl_loss(batch: &BatchTensors<'_>) -> Result<f64> {
    Ok(icl_loss_grad(batch)?.value)
}

pub fn icl_loss_grad(batch: &BatchTensors<'_>) -> Result<LossGrad> {
    let n = batch.n() as f64;
    let tau = batch.temperature;
    let mut out = LossGrad::zeros(batch);
    for (i, &y) in batch.labels.iter().enumerate() {
        let x = batch.inputs.row(i);
        let mut logits = Vec::with_capacity(batch.k());
        let mut grads = Vec::with_capacity(batch.k());
        for l in 0..batch.k() {
            let (c, gx, gt) = cosine_with_grad(x, batch.table.row(l))?;
            logits.push(c / tau);
            grads.push((gx, gt));
        }
        out.value += neg_log_softmax(&logits, y) / n;
        let probs = softmax(&logits);
        for (l, (gx, gt)) in grads.iter().enumerate() {
            let coeff = (probs[l] - if l == y { 1.0 } else { 0.0 }) / (n * tau);
            out.d_inputs.row_mut(i).scaled_add(coeff, gx);
            out.d_table.row_mut(l).scaled_add(coeff, gt);
        }
    }
    Ok(out)
}

pub fn lcl_loss(batch: &BatchTensors<'_>, include_positives: bool) -> Result<f64> {
    Ok(lcl_loss_grad(batch, include_positives)?.value)
}

pub fn lcl_loss_grad(batch: &BatchTensors<'_>, include_positives: bool) -> Result<LossGrad> {
    let tau = batch.temperature;
    let mut out = LossGrad::zeros(batch);
    let mut classes: Vec<usize> = batch.labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let contributing: Vec<usize> = classes
        .into_iter()
        .filter(|&c| batch.labels.iter().any(|&y| y != c))
        .collect();
    if contributing.is_empty() {
        out.no_negatives = true;
        return Ok(out);
    }
    let scale = 1.0 / contributing.len() as f64;

    for &c in &contributing {
        let anchor = batch.table.row(c);
        let mut scores = Vec::with_capacity(batch.n());
        let mut grads = Vec::with_capacity(batch.n());
        for i in 0..batch.n() {
            let (cos, gx, gt) = cosine_with_grad(batch.inputs.row(i), anchor)?;
            scores.push(cos / tau);
            grads.push((gx, gt));
        }
        let positives: Vec<usize> = (0..batch.n()).filter(|&i| batch.labels[i] == c).collect();
        let negatives: Vec<usize> = (0..batch.n()).filter(|&i| batch.labels[i] != c).collect();
        let neg_scores: Vec<f64> = negatives.iter().map(|&i| scores[i]).collect();

        // d(loss)/d(score_i) before the 1/|C| factor
        let mut d_scores = vec![0.0; batch.n()];
        if include_positives {
            for &p in &positives {
                let mut denom = neg_scores.clone();
                denom.push(scores[p]);
                let lse = log_sum_exp(&denom);
                out.value += scale * neg_log_softmax(&denom, denom.len() - 1);
                d_scores[p] += (scores[p] - lse).exp() - 1.0;
                for &j in &negatives {
                    d_scores[j] += (scores[j] - lse).exp();
                }
            }
        } else {
            let lse = log_sum_exp(&neg_scores);
            let neg_probs = softmax(&neg_scores);
            for &p in &positives {
                out.value += scale * (lse - scores[p]);
                d_scores[p] -= 1.0;
            }
            for (slot, &j) in negatives.iter().enumerate() {
                d_scores[j] += positives.len() as f64 * neg_probs[slot];
            }
        }
        for (i, (gx, gt)) in grads.iter().enumerate() {
            let coeff = scale * d_scores[i] / tau;
            if coeff != 0.0 {
                out.d_inputs.row_mut(i).scaled_add(coeff, gx);
                out.d_table.row_mut(c).scaled_add(coeff, gt);
            }
        }
    }
    Ok(out)
}

pub fn lec_loss(table: ArrayView2<'_, f64>, temperature: f64) -> Result<f64> {
    Ok(lec_loss_grad(table, temperature)?.0)
}

/// LEC value and its gradient w.r.t. the table.
pub fn lec_loss_grad(table: ArrayView2<'_, f64>, temperature: f64) -> Result<(f64, Array2<f64>)> {
    let k = table.nrows();
    if k < 2 {
        return Err(Error::Degenerate(format!("label-embedding cross-entropy needs k >= 2, got {k}")));
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidConfig(format!("temperature must be positive, got {temperature}")));
    }
    let mut grad = Array2::zeros(table.raw_dim());
    let mut value = 0.0;
    let kf = k as f64;
    for i in 0..k {
        let mut logits = Vec::with_capacity(k);
        let mut grads = Vec::with_capacity(k);
        for j in 0..k {
            if i == j {
                // cos(t, t) = 1 for any non-zero row; its gradient vanishes.
                if crate::linalg::norm(table.row(i)) == 0.0 {
                    return Err(Error::ZeroNorm(format!("label table row {i}")));
                }
                logits.push(1.0 / temperature);
                grads.push(None);
            } else {
                let (c, gi, gj) = cosine_with_grad(table.row(i), table.row(j))?;
                logits.push(c / temperature);
                grads.push(Some((gi, gj)));
            }
        }
        value += neg_log_softmax(&logits, i) / kf;
        let probs = softmax(&logits);
        for (j, g) in grads.iter().enumerate() {
            if let Some((gi, gj)) = g {
                let coeff = probs[j] / (kf * temperature);
                grad.row_mut(i).scaled_add(coeff, gi);
                grad.row_mut(j).scaled_add(coeff, gj);
            }
        }
    }
    Ok((value, grad))
}

pub fn ice_loss(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    Ok(ice_loss_grad(logits, labels)?.0)
}

/// Mean cross-entropy and its gradient w.r.t. the logits.
pub fn ice_loss_grad(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (n, k) = logits.dim();
    if n == 0 || n != labels.len() {
        return Err(Error::DimensionMismatch(format!("{n} logit rows for {} labels", labels.len())));
    }
    let mut grad = Array2::zeros((n, k));
    let mut value = 0.0;
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        let y = labels[i];
        if y >= k {
            return Err(Error::LabelOutOfRange { label: y, k });
        }
        let row = row.to_vec();
        value += neg_log_softmax(&row, y) / n as f64;
        for (l, p) in softmax(&row).into_iter().enumerate() {
            grad[[i, l]] = (p - if l == y { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((value, grad))
}

/// Level-2 to level-1 grouping of label ids for the hierarchy-weighted loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    pub parent_of: Vec<usize>,
    pub n_parents: usize,
}

impl Hierarchy {
    pub fn from_taxonomy(taxonomy: &RelationTaxonomy) -> Result<Self> {
        if taxonomy.hierarchy_depth() < 2 {
            return Err(Error::InvalidTaxonomy(format!(
                "hierarchy loss needs at least two levels, taxonomy {} has {}",
                taxonomy.framework_name,
                taxonomy.hierarchy_depth()
            )));
        }
        let (groups, parent_of) = taxonomy.parents_at_level(1)?;
        Ok(Hierarchy {
            parent_of,
            n_parents: groups.len(),
        })
    }

    /// Level-1 table: mean of the level-2 rows sharing a parent.
    pub fn parent_table(&self, table: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_parents, table.ncols()));
        let mut counts = vec![0usize; self.n_parents];
        for (l, &p) in self.parent_of.iter().enumerate() {
            out.row_mut(p).scaled_add(1.0, &table.row(l));
            counts[p] += 1;
        }
        for (p, &c) in counts.iter().enumerate() {
            out.row_mut(p).mapv_inplace(|v| v / c as f64);
        }
        out
    }

    fn parent_grad_to_children(&self, d_parent: &Array2<f64>) -> Array2<f64> {
        let mut counts = vec![0usize; self.n_parents];
        for &p in &self.parent_of {
            counts[p] += 1;
        }
        let mut out = Array2::zeros((self.parent_of.len(), d_parent.ncols()));
        for (l, &p) in self.parent_of.iter().enumerate() {
            out.row_mut(l).scaled_add(1.0 / counts[p] as f64, &d_parent.row(p));
        }
        out
    }
}

/// Contrastive terms selected by `toggles` (ICL and/or LCL) at one level.
fn contrastive_pair(batch: &BatchTensors<'_>, toggles: LossToggles, include_positives: bool) -> Result<LossGrad> {
    let mut acc = LossGrad::zeros(batch);
    if toggles.icl {
        acc = acc.add(&icl_loss_grad(batch)?);
    }
    if toggles.lcl {
        acc = acc.add(&lcl_loss_grad(batch, include_positives)?);
    }
    Ok(acc)
}

/// `penalties[0] * L(level 1) + penalties[1] * L(level 2)` where `L` is the
/// ICL + LCL pair computed against the labels of that level.
pub fn hier_loss_grad(
    batch: &BatchTensors<'_>,
    hierarchy: &Hierarchy,
    penalties: &[f64],
    toggles: LossToggles,
    include_positives: bool,
) -> Result<LossGrad> {
    let [p1, p2] = penalties else {
        return Err(Error::InvalidConfig(format!(
            "hierarchy loss needs two penalty factors, got {}",
            penalties.len()
        )));
    };
    if hierarchy.parent_of.len() != batch.k() {
        return Err(Error::DimensionMismatch(format!(
            "hierarchy covers {} labels, table has {}",
            hierarchy.parent_of.len(),
            batch.k()
        )));
    }
    let level2 = contrastive_pair(batch, toggles, include_positives)?;

    let parent_table = hierarchy.parent_table(batch.table);
    let parent_labels: Vec<usize> = batch.labels.iter().map(|&y| hierarchy.parent_of[y]).collect();
    let level1_batch = BatchTensors::new(batch.inputs, &parent_labels, parent_table.view(), batch.temperature)?;
    let level1 = contrastive_pair(&level1_batch, toggles, include_positives)?;

    let level1 = LossGrad {
        d_table: hierarchy.parent_grad_to_children(&level1.d_table),
        ..level1
    };
    Ok(level1.scale(*p1).add(&level2.scale(*p2)))
}

pub fn hier_loss(
    batch: &BatchTensors<'_>,
    hierarchy: &Hierarchy,
    penalties: &[f64],
    toggles: LossToggles,
    include_positives: bool,
) -> Result<f64> {
    Ok(hier_loss_grad(batch, hierarchy, penalties, toggles, include_positives)?.value)
}

/// Individually logged loss terms. `total` is the exact sum of the present terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub icl: Option<f64>,
    pub lcl: Option<f64>,
    pub lec: Option<f64>,
    pub ice: Option<f64>,
    /// Hierarchy-weighted contrastive term, replacing `icl` and `lcl`.
    pub hier: Option<f64>,
    pub total: f64,
}

impl LossComponents {
    fn finish(mut self) -> Self {
        self.total = [self.icl, self.lcl, self.lec, self.ice, self.hier]
            .iter()
            .flatten()
            .sum();
        self
    }
}

/// Gradients of the total loss.
#[derive(Debug, Clone)]
pub struct TotalGrad {
    pub components: LossComponents,
    pub d_inputs: Array2<f64>,
    pub d_table: Array2<f64>,
    pub d_logits: Option<Array2<f64>>,
}

/// Options that change how the total loss is assembled.
#[derive(Debug, Clone, Copy, Default)]
pub struct TotalLossOptions<'h> {
    pub lcl_include_positives: bool,
    /// When set, ICL and LCL are replaced by the hierarchy-weighted term.
    pub hierarchy: Option<(&'h Hierarchy, &'h [f64])>,
}

pub fn total_loss(
    batch: &BatchTensors<'_>,
    logits: Option<ArrayView2<'_, f64>>,
    toggles: LossToggles,
    options: TotalLossOptions<'_>,
) -> Result<LossComponents> {
    Ok(total_loss_grad(batch, logits, toggles, options)?.components)
}

pub fn total_loss_grad(
    batch: &BatchTensors<'_>,
    logits: Option<ArrayView2<'_, f64>>,
    toggles: LossToggles,
    options: TotalLossOptions<'_>,
) -> Result<TotalGrad> {
    if !toggles.any() {
        return Err(Error::InvalidConfig("at least one loss toggle must be on".into()));
    }
    let mut comps = LossComponents::default();
    let mut d_inputs = Array2::zeros(batch.inputs.raw_dim());
    let mut d_table = Array2::zeros(batch.table.raw_dim());

    match options.hierarchy {
        Some((hierarchy, penalties)) if toggles.icl || toggles.lcl => {
            let g = hier_loss_grad(batch, hierarchy, penalties, toggles, options.lcl_include_positives)?;
            comps.hier = Some(g.value);
            d_inputs += &g.d_inputs;
            d_table += &g.d_table;
        }
        _ => {
            if toggles.icl {
                let g = icl_loss_grad(batch)?;
                comps.icl = Some(g.value);
                d_inputs += &g.d_inputs;
                d_table += &g.d_table;
            }
            if toggles.lcl {
                let g = lcl_loss_grad(batch, options.lcl_include_positives)?;
                comps.lcl = Some(g.value);
                d_inputs += &g.d_inputs;
                d_table += &g.d_table;
            }
        }
    }
    if toggles.lec {
        let (v, g) = lec_loss_grad(batch.table, batch.temperature)?;
        comps.lec = Some(v);
        d_table += &g;
    }
    let d_logits = if toggles.ice {
        let logits = logits.ok_or_else(|| Error::InvalidConfig("ICE enabled but no logits supplied".into()))?;
        if logits.nrows() != batch.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} logit rows for batch of {}",
                logits.nrows(),
                batch.n()
            )));
        }
        let (v, g) = ice_loss_grad(logits, batch.labels)?;
        comps.ice = Some(v);
        Some(g)
    } else {
        None
    };
    Ok(TotalGrad {
        components: comps.finish(),
        d_inputs,
        d_table,
        d_logits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    const TAU: f64 = 0.1;

    #[test]
    fn icl_closed_forms() {
        let x = array![[1.0, 0.0]];
        let table = array![[1.0, 0.0], [0.0, 1.0]];
        let b = BatchTensors::new(x.view(), &[0], table.view(), TAU).unwrap();
        let expected = (1.0 + (-10f64).exp()).ln();
        assert!((icl_loss(&b).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 4.5399e-5).abs() < 1e-8);

        let x = array![[1.0, 1.0]];
        let b = BatchTensors::new(x.view(), &[0], table.view(), TAU).unwrap();
        assert!((icl_loss(&b).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn icl_mean_over_identical_instances() {
        let table = array![[1.0, 0.2], [-0.3, 1.0]];
        let one = array![[0.5, 0.7]];
        let two = array![[0.5, 0.7], [0.5, 0.7]];
        let a = icl_loss(&BatchTensors::new(one.view(), &[1], table.view(), TAU).unwrap()).unwrap();
        let b = icl_loss(&BatchTensors::new(two.view(), &[1, 1], table.view(), TAU).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn lcl_closed_forms() {
        // positive aligned with its anchor (cos 1), negative orthogonal (cos 0),
        // and symmetrically for the negative's own class
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let table = array![[1.0, 0.0], [0.0, 1.0]];
        let b = BatchTensors::new(x.view(), &[0, 1], table.view(), TAU).unwrap();
        assert!((lcl_loss(&b, false).unwrap() + 10.0).abs() < 1e-9);

        let x = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let table = array![[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]];
        let b = BatchTensors::new(x.view(), &[0, 1], table.view(), TAU).unwrap();
        assert!(lcl_loss(&b, false).unwrap().abs() < 1e-12);
    }

    #[test]
    fn lcl_single_class_is_zero_with_flag() {
        let x = array![[1.0, 0.0], [0.3, 1.0]];
        let table = array![[1.0, 0.0], [0.0, 1.0]];
        let b = BatchTensors::new(x.view(), &[1, 1], table.view(), TAU).unwrap();
        let g = lcl_loss_grad(&b, false).unwrap();
        assert_eq!(g.value, 0.0);
        assert!(g.no_negatives);
    }

    #[test]
    fn lcl_with_positives_is_non_negative() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let table = array![[1.0, 0.0], [0.0, 1.0]];
        let b = BatchTensors::new(x.view(), &[0, 1], table.view(), TAU).unwrap();
        let v = lcl_loss(&b, true).unwrap();
        assert!((v - (1.0 + (-10f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn lec_closed_forms() {
        let t = array![[1.0, 0.0], [0.0, 1.0]];
        assert!((lec_loss(t.view(), TAU).unwrap() - (1.0 + (-10f64).exp()).ln()).abs() < 1e-12);
        let t = array![[0.4, 0.2], [0.4, 0.2]];
        assert!((lec_loss(t.view(), TAU).unwrap() - 2f64.ln()).abs() < 1e-12);
        let t = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let v = lec_loss(t.view(), TAU).unwrap();
        assert!((v - (1.0 + 2.0 * (-10f64).exp()).ln()).abs() < 1e-12);
        assert!((v - 9.08e-5).abs() < 1e-7);
        assert!(lec_loss(array![[1.0, 0.0]].view(), TAU).is_err());
        assert!(matches!(
            lec_loss(array![[1.0, 0.0], [0.0, 0.0]].view(), TAU),
            Err(Error::ZeroNorm(_))
        ));
    }

    #[test]
    fn ice_closed_forms() {
        let logits = Array2::zeros((1, 4));
        assert!((ice_loss(logits.view(), &[2]).unwrap() - 4f64.ln()).abs() < 1e-12);
        let logits = array![[1000.0, 0.0], [0.0, 0.0]];
        let v = ice_loss(logits.view(), &[0, 1]).unwrap();
        assert!((v - 2f64.ln() / 2.0).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for margin in [1.0, 5.0, 20.0, 50.0] {
            let v = ice_loss(array![[margin, 0.0, 0.0]].view(), &[0]).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-20);
        assert!(matches!(
            ice_loss(array![[0.0, 0.0]].view(), &[2]),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn zero_input_is_error() {
        let x = array![[0.0, 0.0]];
        let table = array![[1.0, 0.0], [0.0, 1.0]];
        let b = BatchTensors::new(x.view(), &[0], table.view(), TAU).unwrap();
        assert!(matches!(icl_loss(&b), Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn total_additivity_and_toggles() {
        let x = array![[0.3, 0.9, -0.2], [1.0, -0.1, 0.4], [-0.5, 0.2, 0.8]];
        let table = array![[1.0, 0.1, 0.0], [0.0, 1.0, 0.3], [0.2, -0.4, 1.0]];
        let logits = array![[0.1, 0.5, -0.2], [1.2, 0.0, 0.3], [-0.4, 0.2, 0.9]];
        let labels = [1, 0, 2];
        let b = BatchTensors::new(x.view(), &labels, table.view(), TAU).unwrap();
        let opts = TotalLossOptions::default();
        let all = total_loss(&b, Some(logits.view()), LossToggles::ALL, opts).unwrap();
        let sum = icl_loss(&b).unwrap()
            + lcl_loss(&b, false).unwrap()
            + lec_loss(table.view(), TAU).unwrap()
            + ice_loss(logits.view(), &labels).unwrap();
        assert_eq!(all.total, all.icl.unwrap() + all.lcl.unwrap() + all.lec.unwrap() + all.ice.unwrap());
        assert!((all.total - sum).abs() < 1e-12);

        let ice_only = total_loss(&b, Some(logits.view()), LossToggles::ICE_ONLY, opts).unwrap();
        assert_eq!(ice_only.total, ice_loss(logits.view(), &labels).unwrap());

        let no_lcl = LossToggles {
            lcl: false,
            ..LossToggles::ALL
        };
        let without = total_loss(&b, Some(logits.view()), no_lcl, opts).unwrap();
        assert!((all.total - without.total - lcl_loss(&b, false).unwrap()).abs() < 1e-12);
    }

    fn hier_taxonomy(depth_two: bool) -> RelationTaxonomy {
        use crate::types::LabelRecord;
        let mk = |name: &str, path: &[&str]| LabelRecord {
            name: name.into(),
            description: None,
            hierarchy_path: Some(path.iter().map(|s| s.to_string()).collect()),
        };
        let labels = if depth_two {
            vec![
                mk("A.x", &["A", "x"]),
                mk("A.y", &["A", "y"]),
                mk("B.z", &["B", "z"]),
            ]
        } else {
            vec![mk("x", &["x"]), mk("y", &["y"])]
        };
        RelationTaxonomy::new("h", labels).unwrap()
    }

    #[test]
    fn hierarchy_needs_two_levels() {
        assert!(Hierarchy::from_taxonomy(&hier_taxonomy(false)).is_err());
        let flat = RelationTaxonomy::from_names("f", &["a", "b"]).unwrap();
        assert!(Hierarchy::from_taxonomy(&flat).is_err());
    }

    #[test]
    fn hier_is_weighted_sum_of_levels() {
        let h = Hierarchy::from_taxonomy(&hier_taxonomy(true)).unwrap();
        assert_eq!(h.parent_of, vec![0, 0, 1]);
        let x = array![[0.3, 0.9, -0.2], [1.0, -0.1, 0.4], [-0.5, 0.2, 0.8]];
        let table = array![[1.0, 0.1, 0.0], [0.0, 1.0, 0.3], [0.2, -0.4, 1.0]];
        let labels = [1, 0, 2];
        let b = BatchTensors::new(x.view(), &labels, table.view(), TAU).unwrap();
        let l2 = icl_loss(&b).unwrap() + lcl_loss(&b, false).unwrap();
        let pt = h.parent_table(table.view());
        let pl = [0, 0, 1];
        let b1 = BatchTensors::new(x.view(), &pl, pt.view(), TAU).unwrap();
        let l1 = icl_loss(&b1).unwrap() + lcl_loss(&b1, false).unwrap();
        let pens = [2f64.sqrt(), 2.0];
        let v = hier_loss(&b, &h, &pens, LossToggles::ALL, false).unwrap();
        assert!((v - (pens[0] * l1 + pens[1] * l2)).abs() < 1e-12);
        assert!(hier_loss(&b, &h, &[1.0], LossToggles::ALL, false).is_err());
    }
}
