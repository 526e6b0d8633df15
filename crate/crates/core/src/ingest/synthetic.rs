//! Separable synthetic corpora for tests and smoke runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{
    DatasetSplits, Framework, InstanceSource, LabelRecord, RelationInstance, RelationKind, RelationTaxonomy,
};

const CLASS_WORDS: usize = 6;
const FILLER: &[&str] = &[
    "the", "a", "of", "and", "to", "in", "was", "that", "for", "on", "with", "as", "by", "at", "from", "it", "this",
    "an", "be", "which", "year", "company", "market", "said", "new", "share", "price", "people", "week", "group",
    "report", "plan", "state", "time", "sales", "last", "first", "two", "more", "also",
];
const SYLLABLES: &[&str] = &["ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pu", "da", "gi"];

/// Pseudo-word `j` of class `c`; depends on the class index only.
pub fn class_word(c: usize, j: usize) -> String {
    let a = SYLLABLES[(c * 5 + j) % SYLLABLES.len()];
    let b = SYLLABLES[(c + j * 7) % SYLLABLES.len()];
    format!("{a}{b}{c}x{j}")
}

fn sentence(rng: &mut ChaCha8Rng, c: usize, n_class: usize, n_filler: usize) -> String {
    let mut words: Vec<String> = (0..n_class)
        .map(|_| class_word(c, rng.gen_range(0..CLASS_WORDS)))
        .collect();
    words.extend((0..n_filler).map(|_| FILLER[rng.gen_range(0..FILLER.len())].to_string()));
    words.shuffle(rng);
    words.join(" ")
}

/// Taxonomy `rel-0 .. rel-{n-1}` with two-level hierarchy paths (pairs of
/// classes share a parent) and descriptions built from the class words.
pub fn synthetic_taxonomy(n_classes: usize) -> Result<RelationTaxonomy> {
    let labels = (0..n_classes)
        .map(|c| {
            let mut l = LabelRecord::named(format!("rel-{c}"));
            l.hierarchy_path = Some(vec![format!("group-{}", c / 2), format!("rel-{c}")]);
            l.description = Some(format!(
                "synthetic relation marked by {}",
                (0..CLASS_WORDS).map(|j| class_word(c, j)).collect::<Vec<_>>().join(" ")
            ));
            l
        })
        .collect();
    RelationTaxonomy::new("SYNTHETIC", labels)
}

/// `n_per_class` instances for each of `n_classes` balanced classes. Each
/// argument mixes two class-specific pseudo-words with shared filler, so the
/// classes are separable from bag-of-token features.
pub fn generate_synthetic_corpus(
    n_classes: usize,
    n_per_class: usize,
    seed: u64,
) -> Result<(Vec<RelationInstance>, RelationTaxonomy)> {
    if n_classes < 2 {
        return Err(Error::InvalidConfig(format!("synthetic corpus needs at least 2 classes, got {n_classes}")));
    }
    let taxonomy = synthetic_taxonomy(n_classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_classes * n_per_class);
    for i in 0..n_per_class {
        for c in 0..n_classes {
            out.push(RelationInstance {
                arg1: sentence(&mut rng, c, 2, 4),
                arg2: sentence(&mut rng, c, 2, 4),
                label: c,
                framework: Framework::Other,
                relation_kind: RelationKind::Na,
                connective: None,
                doc_id: format!("syn_{c}_{i}"),
                source: InstanceSource::Original,
            });
        }
    }
    Ok((out, taxonomy))
}

/// Balanced train/dev/test splits with the given per-class sizes.
pub fn synthetic_splits(
    n_classes: usize,
    per_class: (usize, usize, usize),
    seed: u64,
) -> Result<(DatasetSplits, RelationTaxonomy)> {
    let (tr, dv, te) = per_class;
    let (all, taxonomy) = generate_synthetic_corpus(n_classes, tr + dv + te, seed)?;
    let mut splits = DatasetSplits::default();
    for (pos, inst) in all.into_iter().enumerate() {
        let i = pos / n_classes;
        if i < tr {
            splits.train.push(inst);
        } else if i < tr + dv {
            splits.dev.push(inst);
        } else {
            splits.test.push(inst);
        }
    }
    Ok((splits, taxonomy))
}

/// Renamed, reordered copy of a taxonomy and its data: old label `l` becomes
/// new label `permutation[l]` named `names[permutation[l]]`.
pub fn relabel_synthetic(
    splits: &DatasetSplits,
    taxonomy: &RelationTaxonomy,
    framework_name: &str,
    names: &[&str],
    permutation: &[usize],
) -> Result<(DatasetSplits, RelationTaxonomy)> {
    let k = taxonomy.k();
    let mut seen = vec![false; k];
    if names.len() != k || permutation.len() != k || permutation.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::InvalidConfig("names and permutation must cover every label exactly once".into()));
    }
    let mut labels: Vec<Option<LabelRecord>> = vec![None; k];
    for (old, &new) in permutation.iter().enumerate() {
        let src = &taxonomy.labels()[old];
        let mut l = LabelRecord::named(names[new]);
        l.description = src.description.clone();
        l.hierarchy_path = src.hierarchy_path.as_ref().map(|p| {
            let mut p = p.clone();
            *p.last_mut().expect("non-empty path") = names[new].to_string();
            p
        });
        labels[new] = Some(l);
    }
    let taxonomy = RelationTaxonomy::new(framework_name, labels.into_iter().map(|l| l.expect("bijection")).collect())?;
    let map = |v: &[RelationInstance]| -> Vec<RelationInstance> {
        v.iter()
            .map(|i| RelationInstance {
                label: permutation[i.label],
                ..i.clone()
            })
            .collect()
    };
    Ok((
        DatasetSplits {
            train: map(&splits.train),
            dev: map(&splits.dev),
            test: map(&splits.test),
        },
        taxonomy,
    ))
}
