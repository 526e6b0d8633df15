//! PDTB relation records: loading, sense filtering and section splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoders::{attach_descriptions, parse_label_descriptions, DEFAULT_DESCRIPTIONS};
use crate::error::{Error, Result};
use crate::types::{
    DatasetSplits, Framework, InstanceSource, LabelRecord, RelationInstance, RelationKind, RelationTaxonomy,
};

/// Default minimum count: a sense is kept when it has strictly more instances.
pub const DEFAULT_MIN_COUNT: usize = 100;

/// One row of a tab-separated relation file. `senses` holds one or more
/// dot-delimited sense paths separated by `;` or `|`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdtbRecord {
    pub doc_id: String,
    pub relation_type: String,
    #[serde(default)]
    pub connective: String,
    pub senses: String,
    pub arg1: String,
    pub arg2: String,
}

/// One relation with a single, unfiltered sense path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PdtbRelation {
    pub doc_id: String,
    pub relation_kind: RelationKind,
    pub connective: Option<String>,
    pub sense: String,
    pub arg1: String,
    pub arg2: String,
}

pub fn load_pdtb_records(path: &Path) -> Result<Vec<PdtbRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(false)
        .from_reader(file);
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn save_pdtb_records(path: &Path, records: &[PdtbRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(file);
    for r in records {
        writer.serialize(r).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Which relation types to keep. AltLex, AltLexC and Hypophora count as
/// "other"; EntRel and NoRel carry no sense and are always dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindFilter {
    pub explicit: bool,
    pub implicit: bool,
    pub other: bool,
}

impl KindFilter {
    pub const TOTAL: KindFilter = KindFilter {
        explicit: true,
        implicit: true,
        other: false,
    };
    pub const EXPLICIT: KindFilter = KindFilter {
        explicit: true,
        implicit: false,
        other: false,
    };
    pub const IMPLICIT: KindFilter = KindFilter {
        explicit: false,
        implicit: true,
        other: false,
    };

    pub fn keeps(&self, kind: RelationKind) -> bool {
        match kind {
            RelationKind::Explicit => self.explicit,
            RelationKind::Implicit => self.implicit,
            RelationKind::Other => self.other,
            RelationKind::Na => false,
        }
    }
}

fn is_senseless(relation_type: &str) -> bool {
    matches!(relation_type.trim().to_ascii_lowercase().as_str(), "entrel" | "norel")
}

/// Expands records into one relation per sense, keeping the selected kinds.
pub fn expand_records(records: &[PdtbRecord], kinds: KindFilter) -> Vec<PdtbRelation> {
    let mut out = Vec::new();
    for r in records {
        if is_senseless(&r.relation_type) {
            continue;
        }
        let kind: RelationKind = r.relation_type.parse().expect("parsing is infallible");
        if !kinds.keeps(kind) {
            continue;
        }
        let connective = Some(r.connective.trim().to_string()).filter(|c| !c.is_empty());
        for sense in r.senses.split([';', '|']).map(str::trim).filter(|s| !s.is_empty()) {
            out.push(PdtbRelation {
                doc_id: r.doc_id.clone(),
                relation_kind: kind,
                connective: connective.clone(),
                sense: sense.to_string(),
                arg1: r.arg1.clone(),
                arg2: r.arg2.clone(),
            });
        }
    }
    out
}

/// First `level` components of a dot-delimited sense path.
pub fn truncate_sense(sense: &str, level: usize) -> Result<String> {
    let parts: Vec<&str> = sense.split('.').map(str::trim).collect();
    if parts.len() < level || parts.iter().take(level).any(|p| p.is_empty()) {
        return Err(Error::InvalidInstance(format!(
            "sense {sense:?} has fewer than {level} levels"
        )));
    }
    Ok(parts[..level].join("."))
}

/// Truncates senses to `level` and keeps those with more than `min_count`
/// instances across everything passed in. The taxonomy lists retained
/// senses alphabetically with their hierarchy paths.
pub fn filter_pdtb_senses(
    relations: &[PdtbRelation],
    level: usize,
    min_count: usize,
) -> Result<(Vec<RelationInstance>, RelationTaxonomy)> {
    if level == 0 {
        return Err(Error::InvalidConfig("sense level must be at least 1".into()));
    }
    let mut bad = Vec::new();
    let truncated: Vec<Option<String>> = relations
        .iter()
        .map(|r| match truncate_sense(&r.sense, level) {
            Ok(s) => Some(s),
            Err(_) => {
                bad.push(format!("{}: {:?}", r.doc_id, r.sense));
                None
            }
        })
        .collect();
    if !bad.is_empty() {
        return Err(Error::InvalidInstance(format!(
            "{} relation(s) with sense shallower than level {level}: {}",
            bad.len(),
            bad.iter().take(10).cloned().collect::<Vec<_>>().join(", ")
        )));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in truncated.iter().flatten() {
        *counts.entry(s.as_str()).or_default() += 1;
    }
    let retained: BTreeSet<&str> = counts
        .iter()
        .filter(|(_, &c)| c > min_count)
        .map(|(s, _)| *s)
        .collect();
    let labels: Vec<LabelRecord> = retained
        .iter()
        .map(|s| {
            let mut l = LabelRecord::named(*s);
            l.hierarchy_path = Some(s.split('.').map(str::to_string).collect());
            l
        })
        .collect();
    let taxonomy = RelationTaxonomy::new("PDTB", labels)?;
    let taxonomy = attach_descriptions(&taxonomy, &parse_label_descriptions(DEFAULT_DESCRIPTIONS));
    let instances = relations
        .iter()
        .zip(&truncated)
        .filter_map(|(r, s)| {
            let label = taxonomy.index_of(s.as_deref()?)?;
            Some(RelationInstance {
                arg1: r.arg1.clone(),
                arg2: r.arg2.clone(),
                label,
                framework: Framework::Pdtb,
                relation_kind: r.relation_kind,
                connective: r.connective.clone(),
                doc_id: r.doc_id.clone(),
                source: InstanceSource::Original,
            })
        })
        .collect();
    Ok((instances, taxonomy))
}

/// WSJ section of a document id such as `wsj_2100` (section 21). The `wsj_`
/// prefix is optional; four digits are required.
pub fn wsj_section(doc_id: &str) -> Result<u32> {
    let trimmed = doc_id.trim();
    let digits = trimmed
        .get(..4)
        .filter(|p| p.eq_ignore_ascii_case("wsj_"))
        .map_or(trimmed, |_| &trimmed[4..]);
    let head = digits.get(..4).filter(|d| d.bytes().all(|b| b.is_ascii_digit()));
    match head {
        Some(d) => Ok(d[..2].parse().expect("two ASCII digits")),
        None => Err(Error::InvalidInstance(format!(
            "cannot read a WSJ section from document id {doc_id:?}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionSplit {
    Train,
    Dev,
    Test,
    Excluded,
}

/// Sections 2-20 train, 0-1 dev, 21-22 test, the rest excluded.
pub fn section_split(section: u32) -> SectionSplit {
    match section {
        0 | 1 => SectionSplit::Dev,
        2..=20 => SectionSplit::Train,
        21 | 22 => SectionSplit::Test,
        _ => SectionSplit::Excluded,
    }
}

pub fn split_pdtb_by_section(instances: Vec<RelationInstance>) -> Result<DatasetSplits> {
    let mut splits = DatasetSplits::default();
    let mut excluded = 0usize;
    for inst in instances {
        match section_split(wsj_section(&inst.doc_id)?) {
            SectionSplit::Train => splits.train.push(inst),
            SectionSplit::Dev => splits.dev.push(inst),
            SectionSplit::Test => splits.test.push(inst),
            SectionSplit::Excluded => excluded += 1,
        }
    }
    if excluded > 0 {
        log::info!("{excluded} instance(s) from sections 23+ left out of the splits");
    }
    Ok(splits)
}
