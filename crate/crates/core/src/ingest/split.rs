use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{DatasetSplits, RelationInstance};

/// Moves `fraction` of `train` into a dev split, stratified by label.
///
/// Classes with fewer than two instances stay entirely in train, and every
/// class keeps at least one training instance. The dev total is
/// `round(n_eligible * fraction)`, distributed over classes by largest
/// remainder. Both outputs keep the input order.
pub fn split_rst_validation(train: Vec<RelationInstance>, fraction: f64, seed: u64) -> Result<DatasetSplits> {
    if train.is_empty() {
        return Err(Error::Empty("no training instances to split".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("validation fraction must be in (0, 1), got {fraction}")));
    }
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, inst) in train.iter().enumerate() {
        by_label.entry(inst.label).or_default().push(i);
    }
    let eligible: Vec<(usize, usize)> = by_label
        .iter()
        .filter(|(_, v)| v.len() >= 2)
        .map(|(l, v)| (*l, v.len()))
        .collect();
    let n_eligible: usize = eligible.iter().map(|(_, n)| n).sum();
    let target = (n_eligible as f64 * fraction).round() as usize;

    let mut quota: BTreeMap<usize, usize> = BTreeMap::new();
    let mut remainders = Vec::new();
    for &(label, n) in &eligible {
        let exact = n as f64 * fraction;
        let base = (exact.floor() as usize).min(n - 1);
        quota.insert(label, base);
        remainders.push((exact - exact.floor(), label, n));
    }
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut assigned: usize = quota.values().sum();
    for &(_, label, n) in &remainders {
        if assigned >= target {
            break;
        }
        let q = quota.get_mut(&label).expect("eligible label");
        if *q < n - 1 {
            *q += 1;
            assigned += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut to_dev = vec![false; train.len()];
    for (label, idx) in &by_label {
        let q = quota.get(label).copied().unwrap_or(0);
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        for &i in &idx[..q] {
            to_dev[i] = true;
        }
    }
    let mut splits = DatasetSplits::default();
    for (inst, dev) in train.into_iter().zip(to_dev) {
        if dev {
            splits.dev.push(inst);
        } else {
            splits.train.push(inst);
        }
    }
    Ok(splits)
}
