//! Corpus preprocessing: RST trees and PDTB records into relation instances,
//! splits, sense filtering, back-translation and synthetic corpora.

pub mod augment;
pub mod name_map;
pub mod pdtb;
pub mod rst;
pub mod split;
pub mod synthetic;

use crate::error::Result;
use crate::types::{DatasetSplits, RelationInstance, RelationTaxonomy};

pub use augment::{
    backtranslate_augment, AugmentOptions, AugmentResult, HttpTranslator, IdentityTranslator, RecordedTranslation,
    RecordedTranslator, TranslationClient,
};
pub use name_map::{NameLookup, RelationNameMap, DEFAULT_RST_NAME_MAP};
pub use pdtb::{
    expand_records, filter_pdtb_senses, load_pdtb_records, section_split, split_pdtb_by_section, wsj_section,
    KindFilter, PdtbRecord, PdtbRelation, SectionSplit, DEFAULT_MIN_COUNT,
};
pub use rst::{binarize_rst_tree, extract_rst_instances, load_dis_dir, parse_dis, Nuclearity, RstNode, RstTree};
pub use split::split_rst_validation;
pub use synthetic::{generate_synthetic_corpus, relabel_synthetic, synthetic_splits, synthetic_taxonomy};

/// Binarizes every tree and extracts its instances, in tree order.
pub fn rst_instances(
    trees: &[RstTree],
    name_map: &RelationNameMap,
    taxonomy: &RelationTaxonomy,
) -> Result<Vec<RelationInstance>> {
    let mut out = Vec::new();
    for tree in trees {
        out.extend(extract_rst_instances(&binarize_rst_tree(tree)?, name_map, taxonomy)?);
    }
    Ok(out)
}

/// RST train and test trees to train/dev/test splits, holding out
/// `dev_fraction` of train for validation.
pub fn build_rst_splits(
    train_trees: &[RstTree],
    test_trees: &[RstTree],
    name_map: &RelationNameMap,
    dev_fraction: f64,
    seed: u64,
) -> Result<(DatasetSplits, RelationTaxonomy)> {
    let taxonomy = name_map.taxonomy("RST")?;
    let train = rst_instances(train_trees, name_map, &taxonomy)?;
    let mut splits = split_rst_validation(train, dev_fraction, seed)?;
    splits.test = rst_instances(test_trees, name_map, &taxonomy)?;
    Ok((splits, taxonomy))
}

/// PDTB records to section splits over the retained level-2 senses.
pub fn build_pdtb_splits(
    records: &[PdtbRecord],
    kinds: KindFilter,
    min_count: usize,
) -> Result<(DatasetSplits, RelationTaxonomy)> {
    let relations = expand_records(records, kinds);
    let (instances, taxonomy) = filter_pdtb_senses(&relations, 2, min_count)?;
    Ok((split_pdtb_by_section(instances)?, taxonomy))
}
