//! Inference, classification metrics and the label-embedding quality score.
//!
//! LEQ: build one proxy per class (the mean input representation of its
//! instances), take the cosine matrix `M[i][j] = cos(proxy_i, label_j)`,
//! min-max scale every row to `[0, 1]` and average the diagonal.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{argmax, cosine, cosine_matrix};
use crate::model::Model;
use crate::types::{DatasetSplits, RelationInstance, SplitName};

/// Cosine argmax over the table rows, lowest label id on ties.
pub fn predict(x: ArrayView1<'_, f64>, table: ArrayView2<'_, f64>) -> Result<usize> {
    if x.len() != table.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "input dimension {} vs table dimension {}",
            x.len(),
            table.ncols()
        )));
    }
    if table.nrows() == 0 {
        return Err(Error::Empty("label table has no rows".into()));
    }
    let scores = table
        .rows()
        .into_iter()
        .map(|row| cosine(x, row))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmax(&scores))
}

/// Accuracy and macro-F1. Classes with neither gold nor predicted instances
/// are left out of the macro average.
pub fn classification_metrics(preds: &[usize], golds: &[usize], k: usize) -> Result<(f64, f64)> {
    if preds.len() != golds.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Empty("no predictions to score".into()));
    }
    let mut tp = vec![0usize; k];
    let mut pred_count = vec![0usize; k];
    let mut gold_count = vec![0usize; k];
    let mut correct = 0usize;
    for (&p, &g) in preds.iter().zip(golds) {
        if p >= k {
            return Err(Error::LabelOutOfRange { label: p, k });
        }
        if g >= k {
            return Err(Error::LabelOutOfRange { label: g, k });
        }
        pred_count[p] += 1;
        gold_count[g] += 1;
        if p == g {
            tp[p] += 1;
            correct += 1;
        }
    }
    let mut f1_sum = 0.0;
    let mut present = 0usize;
    for c in 0..k {
        if pred_count[c] == 0 && gold_count[c] == 0 {
            continue;
        }
        present += 1;
        let denom = pred_count[c] + gold_count[c];
        f1_sum += 2.0 * tp[c] as f64 / denom as f64;
    }
    Ok((correct as f64 / preds.len() as f64, f1_sum / present as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProxyTable {
    pub matrix: Array2<f64>,
    pub source_split: SplitName,
    pub counts: Vec<usize>,
}

impl ClassProxyTable {
    pub fn is_present(&self, label: usize) -> bool {
        self.counts[label] > 0
    }

    /// True when proxies were computed on the evaluation (test) split.
    pub fn uses_test_data(&self) -> bool {
        self.source_split == SplitName::Test
    }
}

/// Per-class mean of input representations. Classes with no instance get a
/// zero row and a zero count.
pub fn class_proxies(
    instances: &[RelationInstance],
    representations: ArrayView2<'_, f64>,
    k: usize,
    split: SplitName,
) -> Result<ClassProxyTable> {
    if instances.len() != representations.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} instances but {} representations",
            instances.len(),
            representations.nrows()
        )));
    }
    let mut matrix = Array2::zeros((k, representations.ncols()));
    let mut counts = vec![0usize; k];
    for (inst, repr) in instances.iter().zip(representations.rows()) {
        if inst.label >= k {
            return Err(Error::LabelOutOfRange { label: inst.label, k });
        }
        matrix.row_mut(inst.label).scaled_add(1.0, &repr);
        counts[inst.label] += 1;
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            matrix.row_mut(c).mapv_inplace(|v| v / n as f64);
        }
    }
    if split == SplitName::Test {
        log::warn!("class proxies computed on the test split; LEQ is an evaluation-on-test figure");
    }
    Ok(ClassProxyTable {
        matrix,
        source_split: split,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// Constant raw row: normalised to 0.5 and left out of LEQ.
    Degenerate,
    /// No instance of the class in the proxy split: left out of LEQ.
    AbsentClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub raw: Array2<f64>,
    pub normalized: Array2<f64>,
    pub row_status: Vec<RowStatus>,
}

pub fn correlation_matrix(proxies: &ClassProxyTable, table: ArrayView2<'_, f64>) -> Result<CorrelationMatrix> {
    let k = proxies.matrix.nrows();
    if table.nrows() != k || table.ncols() != proxies.matrix.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "proxy table {:?} vs label table {:?}",
            proxies.matrix.dim(),
            table.dim()
        )));
    }
    let mut raw = Array2::zeros((k, k));
    let mut normalized = Array2::zeros((k, k));
    let mut row_status = vec![RowStatus::Ok; k];
    for i in 0..k {
        if !proxies.is_present(i) {
            row_status[i] = RowStatus::AbsentClass;
            continue;
        }
        for j in 0..k {
            raw[[i, j]] = cosine(proxies.matrix.row(i), table.row(j))?;
        }
        let row = raw.row(i);
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max > min {
            for j in 0..k {
                normalized[[i, j]] = (raw[[i, j]] - min) / (max - min);
            }
        } else {
            row_status[i] = RowStatus::Degenerate;
            normalized.row_mut(i).fill(0.5);
        }
    }
    Ok(CorrelationMatrix {
        raw,
        normalized,
        row_status,
    })
}

/// Mean normalised diagonal over rows that are neither degenerate nor absent.
pub fn leq_score(corr: &CorrelationMatrix) -> Result<f64> {
    let kept: Vec<f64> = corr
        .row_status
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == RowStatus::Ok)
        .map(|(i, _)| corr.normalized[[i, i]])
        .collect();
    if kept.is_empty() {
        return Err(Error::Degenerate("every correlation row is degenerate or absent".into()));
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Pearson correlation coefficient.
pub fn metric_correlation(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("need at least 3 points, got {}", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("constant series".into()));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Fraction in `[0, 1]`; tables report it multiplied by 100.
    pub leq: f64,
    pub eval_split: SplitName,
    pub proxy_split: SplitName,
    pub n_eval: usize,
    pub degenerate_rows: Vec<usize>,
    pub absent_classes: Vec<usize>,
}

/// Accuracy and macro-F1 on `eval_split`, LEQ with proxies from `proxy_split`.
pub fn evaluate_model(
    model: &Model,
    splits: &DatasetSplits,
    eval_split: SplitName,
    proxy_split: SplitName,
) -> Result<(EvalMetrics, CorrelationMatrix)> {
    let eval = splits.get(eval_split);
    let reprs = model.represent(eval)?;
    let preds = reprs
        .rows()
        .into_iter()
        .map(|r| model.predict_repr(r))
        .collect::<Result<Vec<_>>>()?;
    let golds: Vec<usize> = eval.iter().map(|i| i.label).collect();
    let (accuracy, macro_f1) = classification_metrics(&preds, &golds, model.k())?;

    let proxy_instances = splits.get(proxy_split);
    let proxy_reprs = if proxy_split == eval_split {
        reprs
    } else {
        model.represent(proxy_instances)?
    };
    let proxies = class_proxies(proxy_instances, proxy_reprs.view(), model.k(), proxy_split)?;
    let corr = correlation_matrix(&proxies, model.label_rows().view())?;
    let leq = leq_score(&corr)?;
    let pick = |status: RowStatus| -> Vec<usize> {
        corr.row_status
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == status)
            .map(|(i, _)| i)
            .collect()
    };
    let metrics = EvalMetrics {
        accuracy,
        macro_f1,
        leq,
        eval_split,
        proxy_split,
        n_eval: eval.len(),
        degenerate_rows: pick(RowStatus::Degenerate),
        absent_classes: pick(RowStatus::AbsentClass),
    };
    Ok((metrics, corr))
}

/// Cosine matrix between two sets of row vectors, exposed for reports.
pub fn raw_cosines(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    cosine_matrix(a, b)
}
