//! Property tests over the library's invariants.

mod common;

use std::collections::{BTreeMap, HashSet};

use discalign::alignment::{average_distributions, rank_row, relabel_dataset, MapEntry, MapProvenance, MapTarget, RelabelingMap};
use discalign::artifact::{read_label_table_tsv, write_label_table_tsv};
use discalign::encoders::EncoderState;
use discalign::evaluation::{correlation_matrix, leq_score, predict, ClassProxyTable};
use discalign::ingest::{
    backtranslate_augment, binarize_rst_tree, expand_records, extract_rst_instances, filter_pdtb_senses,
    section_split, split_pdtb_by_section, split_rst_validation, wsj_section, AugmentOptions, IdentityTranslator,
    KindFilter, Nuclearity, PdtbRecord, RelationNameMap, RstNode, RstTree, SectionSplit,
};
use discalign::losses::{icl_loss, lcl_loss, lec_loss, BatchTensors};
use discalign::training::{clip_grad_norm, MeanStd, TrainState};
use discalign::types::label_counts;
use discalign::{RelationTaxonomy, SplitName};
use ndarray::Array2;
use proptest::prelude::*;

use common::*;

const TAU: f64 = 0.1;

/// `rows x cols` matrix with entries in [-1, 1] and no near-zero row.
fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
        .prop_filter("non-zero rows", |m| m.rows().into_iter().all(|r| r.dot(&r) > 1e-4))
}

/// Batch inputs, labels and a label table with matching shapes.
fn batch_parts() -> impl Strategy<Value = (Array2<f64>, Vec<usize>, Array2<f64>)> {
    (1usize..=5, 2usize..=5, 2usize..=6).prop_flat_map(|(n, k, d)| {
        (matrix(n, d), prop::collection::vec(0..k, n), matrix(k, d))
    })
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn scale_rows(m: &Array2<f64>, scales: &[f64]) -> Array2<f64> {
    let mut out = m.clone();
    for (mut row, s) in out.rows_mut().into_iter().zip(scales.iter().cycle()) {
        row *= *s;
    }
    out
}

/// Random RST subtree over EDUs `first..first + size`.
fn rst_node(first: usize, size: usize, depth: u32) -> BoxedStrategy<RstNode> {
    if size == 1 {
        return Just(RstNode::leaf(first, Nuclearity::Nucleus)).boxed();
    }
    let max_children = size.min(4);
    (2..=max_children, any::<u64>(), prop::sample::select(vec!["list", "elaboration-additional", "cause", "contrast"]))
        .prop_flat_map(move |(n_children, cut_seed, relation)| {
            // Split `size` EDUs into `n_children` non-empty runs.
            let mut cuts: Vec<usize> = (1..size).collect();
            let mut s = cut_seed;
            let mut chosen = Vec::new();
            for _ in 0..n_children - 1 {
                let i = (s % cuts.len() as u64) as usize;
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                chosen.push(cuts.remove(i));
            }
            chosen.sort();
            let mut bounds = vec![0];
            bounds.extend(chosen);
            bounds.push(size);
            let children: Vec<BoxedStrategy<RstNode>> = bounds
                .windows(2)
                .map(|w| {
                    if depth == 0 {
                        flat_node(first + w[0], w[1] - w[0])
                    } else {
                        rst_node(first + w[0], w[1] - w[0], depth - 1)
                    }
                })
                .collect();
            children.prop_map(move |c| RstNode::internal(Nuclearity::Nucleus, Some(relation), c))
        })
        .boxed()
}

/// A single n-ary node over `size` leaves.
fn flat_node(first: usize, size: usize) -> BoxedStrategy<RstNode> {
    if size == 1 {
        Just(RstNode::leaf(first, Nuclearity::Satellite)).boxed()
    } else {
        Just(RstNode::internal(
            Nuclearity::Satellite,
            Some("list"),
            (first..first + size).map(|i| RstNode::leaf(i, Nuclearity::Nucleus)).collect(),
        ))
        .boxed()
    }
}

fn rst_tree() -> impl Strategy<Value = RstTree> {
    (1usize..=9).prop_flat_map(|n| {
        rst_node(1, n, 3).prop_map(move |mut root| {
            root.nuclearity = Nuclearity::Root;
            RstTree::new("wsj_0601", root, (1..=n).map(|i| format!("edu{i}")).collect()).unwrap()
        })
    })
}

fn leaves(node: &RstNode, out: &mut Vec<usize>) {
    if node.is_leaf() {
        out.push(node.span.0);
    }
    for c in &node.children {
        leaves(c, out);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contrastive_losses_ignore_row_scale(
        (x, labels, t) in batch_parts(),
        xs in prop::collection::vec(0.05f64..20.0, 5),
        ts in prop::collection::vec(0.05f64..20.0, 5),
    ) {
        let b = BatchTensors::new(x.view(), &labels, t.view(), TAU).unwrap();
        let (x2, t2) = (scale_rows(&x, &xs), scale_rows(&t, &ts));
        let b2 = BatchTensors::new(x2.view(), &labels, t2.view(), TAU).unwrap();
        prop_assert!(rel_close(icl_loss(&b).unwrap(), icl_loss(&b2).unwrap()));
        prop_assert!(rel_close(lcl_loss(&b, false).unwrap(), lcl_loss(&b2, false).unwrap()));
        prop_assert!(rel_close(lec_loss(t.view(), TAU).unwrap(), lec_loss(t2.view(), TAU).unwrap()));
    }

    #[test]
    fn lec_ignores_label_order((_, _, t) in batch_parts(), seed in any::<u64>()) {
        let k = t.nrows();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.rotate_left((seed % k as u64) as usize);
        perm.swap(0, k - 1);
        let permuted = Array2::from_shape_fn(t.raw_dim(), |(i, j)| t[[perm[i], j]]);
        prop_assert!(rel_close(lec_loss(t.view(), TAU).unwrap(), lec_loss(permuted.view(), TAU).unwrap()));
    }

    #[test]
    fn icl_matches_reference((x, labels, t) in batch_parts()) {
        let b = BatchTensors::new(x.view(), &labels, t.view(), TAU).unwrap();
        let want = icl_ref(&to_rows(&x), &labels, &to_rows(&t), TAU);
        prop_assert!(rel_close(icl_loss(&b).unwrap(), want));
        let want = lcl_ref(&to_rows(&x), &labels, &to_rows(&t), TAU);
        prop_assert!((lcl_loss(&b, false).unwrap() - want).abs() < 1e-9);
        prop_assert!(rel_close(lec_loss(t.view(), TAU).unwrap(), lec_ref(&to_rows(&t), TAU)));
    }

    #[test]
    fn predict_ignores_power_of_two_scaling(
        (x, _, t) in batch_parts(),
        ex in -8i32..8,
        ets in prop::collection::vec(-8i32..8, 5),
    ) {
        let scales: Vec<f64> = ets.iter().map(|&e| 2f64.powi(e)).collect();
        let t2 = scale_rows(&t, &scales);
        for row in x.rows() {
            let scaled = &row * 2f64.powi(ex);
            prop_assert_eq!(predict(row, t.view()).unwrap(), predict(scaled.view(), t2.view()).unwrap());
        }
    }

    #[test]
    fn leq_and_normalised_rows_in_unit_interval(
        (p, t) in (2usize..=6, 2usize..=6).prop_flat_map(|(k, d)| (matrix(k, d), matrix(k, d))),
        absent in any::<u8>(),
    ) {
        let k = p.nrows();
        let counts: Vec<usize> = (0..k).map(|i| if i > 0 && absent as usize % k == i { 0 } else { 1 }).collect();
        let proxies = ClassProxyTable { matrix: p, source_split: SplitName::Dev, counts };
        let corr = correlation_matrix(&proxies, t.view()).unwrap();
        prop_assert!(corr.normalized.iter().all(|v| (0.0..=1.0).contains(v)));
        let leq = leq_score(&corr).unwrap();
        prop_assert!((0.0..=1.0).contains(&leq));
    }

    #[test]
    fn encoder_is_permutation_equivariant(
        pairs in prop::collection::vec(("[a-z]{1,6}( [a-z]{1,6}){0,4}", "[a-z]{1,6}( [a-z]{1,6}){0,4}"), 1..6),
        rot in 0usize..6,
    ) {
        let enc = EncoderState::pretrained("tiny-roberta", 256, 8).unwrap();
        let out = enc.encode_inputs(&pairs, 16, 16).unwrap();
        let mut rotated = pairs.clone();
        let r = rot % pairs.len();
        rotated.rotate_left(r);
        let out2 = enc.encode_inputs(&rotated, 16, 16).unwrap();
        for i in 0..pairs.len() {
            prop_assert_eq!(out2.row(i), out.row((i + r) % pairs.len()));
        }
    }

    #[test]
    fn binarization_invariants(tree in rst_tree()) {
        let bin = binarize_rst_tree(&tree).unwrap();
        prop_assert!(bin.is_binary());
        prop_assert_eq!(binarize_rst_tree(&bin).unwrap(), bin.clone());
        let (mut before, mut after) = (Vec::new(), Vec::new());
        leaves(&tree.root, &mut before);
        leaves(&bin.root, &mut after);
        prop_assert_eq!(before, after);

        let map = RelationNameMap::default_rst();
        let tax = map.taxonomy("RST").unwrap();
        let inst = extract_rst_instances(&bin, &map, &tax).unwrap();
        prop_assert_eq!(inst.len(), bin.root.internal_count());
        let mut stack = vec![&bin.root];
        let mut i = 0;
        while let Some(node) = stack.pop() {
            if node.is_leaf() {
                continue;
            }
            prop_assert_eq!(format!("{} {}", inst[i].arg1, inst[i].arg2), bin.span_text(node.span));
            i += 1;
            stack.push(&node.children[1]);
            stack.push(&node.children[0]);
        }
    }

    #[test]
    fn section_split_is_a_partition(docs in prop::collection::vec(0u32..10000, 1..60)) {
        let instances: Vec<_> = docs.iter().map(|d| instance("a", "b", 0, &format!("wsj_{d:04}"))).collect();
        let splits = split_pdtb_by_section(instances).unwrap();
        let kept = docs.iter().filter(|&&d| d / 100 <= 22).count();
        prop_assert_eq!(splits.len(), kept);
        for (split, name) in [(&splits.train, SectionSplit::Train), (&splits.dev, SectionSplit::Dev), (&splits.test, SectionSplit::Test)] {
            for inst in split {
                prop_assert_eq!(section_split(wsj_section(&inst.doc_id).unwrap()), name);
            }
        }
    }

    #[test]
    fn sense_filter_keeps_only_frequent_senses(
        senses in prop::collection::vec(prop::sample::select(vec![
            "Comparison.Contrast", "Comparison.Concession.Arg2-as-denier", "Contingency.Cause.Reason",
            "Expansion.Conjunction", "Temporal.Asynchronous.Precedence",
        ]), 1..80),
        min_count in 0usize..20,
    ) {
        let records: Vec<PdtbRecord> = senses.iter().enumerate().map(|(i, s)| PdtbRecord {
            doc_id: format!("wsj_{:04}", 200 + i),
            relation_type: "Implicit".into(),
            connective: String::new(),
            senses: s.to_string(),
            arg1: "a".into(),
            arg2: "b".into(),
        }).collect();
        let (inst, tax) = filter_pdtb_senses(&expand_records(&records, KindFilter::TOTAL), 2, min_count).unwrap();
        let counts = label_counts(&inst);
        prop_assert!(inst.iter().all(|i| i.label < tax.k()));
        prop_assert!(counts.values().all(|&c| c > min_count));
        prop_assert_eq!(counts.len(), tax.k());
    }

    #[test]
    fn ranking_survives_monotone_transforms(row in prop::collection::vec(-1.0f64..1.0, 1..12), thr in -0.5f64..0.5, top in 1usize..6) {
        let f = |v: f64| v * v * v + v;
        let mapped: Vec<f64> = row.iter().map(|&v| f(v)).collect();
        let a: Vec<usize> = rank_row(&row, thr, top).into_iter().map(|(i, _)| i).collect();
        let b: Vec<usize> = rank_row(&mapped, f(thr), top).into_iter().map(|(i, _)| i).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn relabel_preserves_counts(labels in prop::collection::vec(0usize..4, 0..40), excluded in 0usize..4) {
        let source = RelationTaxonomy::from_names("S", &["a", "b", "c", "d"]).unwrap();
        let target = RelationTaxonomy::from_names("T", &["x", "y"]).unwrap();
        let entries = ["a", "b", "c", "d"].iter().enumerate().map(|(i, s)| MapEntry {
            source: s.to_string(),
            target: if i == excluded { MapTarget::Exclude } else { MapTarget::Label(["x", "y"][i % 2].into()) },
            strength: None,
            note: String::new(),
        }).collect();
        let map = RelabelingMap { provenance: MapProvenance::ThisMethod, source_framework: "S".into(), target_framework: "T".into(), entries };
        let inst: Vec<_> = labels.iter().enumerate().map(|(i, &l)| instance("a", "b", l, &format!("d{i}"))).collect();
        let out = relabel_dataset(&inst, &source, &map, &target).unwrap();
        prop_assert_eq!(out.relabeled + out.dropped, inst.len());
        prop_assert_eq!(out.dropped, labels.iter().filter(|&&l| l == excluded).count());
    }

    #[test]
    fn ensemble_average_is_normalised_and_equivariant(
        logits in (1usize..8, 1usize..5).prop_flat_map(|(k, m)| prop::collection::vec(prop::collection::vec(-6.0f64..6.0, k), m)),
        shift in 0usize..8,
    ) {
        let dists: Vec<Vec<f64>> = logits.iter().map(|l| {
            let z: f64 = l.iter().map(|v| v.exp()).sum();
            l.iter().map(|v| v.exp() / z).collect()
        }).collect();
        let avg = average_distributions(&dists).unwrap();
        prop_assert!((avg.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mut reversed = dists.clone();
        reversed.reverse();
        let avg_rev = average_distributions(&reversed).unwrap();
        prop_assert!(avg.iter().zip(&avg_rev).all(|(a, b)| (a - b).abs() < 1e-12));
        let k = avg.len();
        let s = shift % k;
        let rotated: Vec<Vec<f64>> = dists.iter().map(|d| { let mut d = d.clone(); d.rotate_left(s); d }).collect();
        let avg_rot = average_distributions(&rotated).unwrap();
        for j in 0..k {
            prop_assert!((avg_rot[j] - avg[(j + s) % k]).abs() < 1e-12);
        }
    }

    #[test]
    fn augmentation_copies_follow_label_distribution(labels in prop::collection::vec(0usize..5, 1..40), skip in prop::collection::hash_set(0usize..5, 0..3)) {
        let train: Vec<_> = labels.iter().enumerate().map(|(i, &l)| instance(&format!("a{i}"), "b", l, &format!("d{i}"))).collect();
        let out = backtranslate_augment(train.clone(), &skip, &IdentityTranslator, &AugmentOptions::default()).unwrap();
        let kept: Vec<_> = train.iter().filter(|i| !skip.contains(&i.label)).cloned().collect();
        prop_assert_eq!(out.instances.len(), train.len() + kept.len());
        prop_assert_eq!(&out.instances[..train.len()], &train[..]);
        let copies = &out.instances[train.len()..];
        prop_assert_eq!(label_counts(copies), label_counts(&kept));
        prop_assert!(copies.iter().all(|c| c.source == discalign::InstanceSource::Augmented));
    }

    #[test]
    fn clipping_bounds_the_norm(g in prop::collection::vec(-100.0f64..100.0, 1..30), max in 0.1f64..5.0) {
        let mut a = g.clone();
        let (before, after) = clip_grad_norm(&mut [&mut a[..]], max);
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(norm <= max + 1e-6);
        prop_assert!((norm - after).abs() < 1e-9 * (1.0 + norm));
        let want = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((before - want).abs() < 1e-9 * (1.0 + want));
    }

    #[test]
    fn early_stopping_bookkeeping(losses in prop::collection::vec(0.0f64..10.0, 1..30), patience in 1usize..7) {
        let mut state = TrainState::new(patience, 0);
        let mut best = f64::INFINITY;
        for &l in &losses {
            let outcome = state.observe(l);
            best = best.min(l);
            prop_assert!(state.patience_left <= patience);
            prop_assert_eq!(state.best_val_loss, best);
            if outcome == discalign::training::EpochOutcome::Stop {
                prop_assert_eq!(state.patience_left, 0);
                break;
            }
        }
    }

    #[test]
    fn label_table_tsv_round_trips_exactly(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 6)) {
        let tax = RelationTaxonomy::from_names("T", &["a", "b", "c"]).unwrap();
        let table = Array2::from_shape_vec((3, 2), values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        write_label_table_tsv(&path, &table, &tax).unwrap();
        let back = read_label_table_tsv(&path, &tax).unwrap();
        prop_assert!(table.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn rst_validation_split_keeps_every_instance(labels in prop::collection::vec(0usize..6, 1..80), seed in any::<u64>()) {
        let train: Vec<_> = labels.iter().enumerate().map(|(i, &l)| instance("a", "b", l, &format!("d{i}"))).collect();
        let splits = split_rst_validation(train.clone(), 0.2, seed).unwrap();
        prop_assert_eq!(splits.train.len() + splits.dev.len(), train.len());
        let before = label_counts(&train);
        let after = label_counts(&splits.train);
        for (label, n) in before {
            prop_assert!(after.get(&label).copied().unwrap_or(0) >= 1, "label {} lost from train ({} total)", label, n);
        }
        let ids: HashSet<&str> = splits.train.iter().chain(&splits.dev).map(|i| i.doc_id.as_str()).collect();
        prop_assert_eq!(ids.len(), train.len());
    }

    #[test]
    fn mean_std_matches_sample_formula(values in prop::collection::vec(-100.0f64..100.0, 1..20)) {
        let ms = MeanStd::of(&values).unwrap();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        prop_assert!((ms.mean - mean).abs() < 1e-9);
        prop_assert!((ms.std - std).abs() < 1e-9);
    }
}

#[test]
fn label_counts_are_ordered() {
    let inst: Vec<_> = [2usize, 0, 2].iter().map(|&l| instance("a", "b", l, "d")).collect();
    assert_eq!(label_counts(&inst), BTreeMap::from([(0, 1), (2, 2)]));
}
