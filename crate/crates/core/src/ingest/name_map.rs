use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::encoders::{attach_descriptions, parse_label_descriptions, DEFAULT_DESCRIPTIONS};
use crate::error::{Error, Result};
use crate::types::RelationTaxonomy;

/// Fine-grained to coarse mapping shipped with the crate.
pub const DEFAULT_RST_NAME_MAP: &str = include_str!("../../data/rst_name_map.tsv");

/// Marker for relations that are known but outside the class inventory.
pub const EXCLUDED_CLASS: &str = "-";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NameLookup<'a> {
    Class(&'a str),
    Excluded,
    Unknown,
}

/// Fine-grained relation name to coarse class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationNameMap {
    entries: BTreeMap<String, Option<String>>,
}

impl RelationNameMap {
    /// Parses `fine<TAB>coarse` lines; `#` starts a comment line.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (fine, coarse) = line.split_once('\t').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: "expected fine<TAB>coarse".into(),
            })?;
            let fine = fine.trim().to_lowercase();
            let coarse = coarse.trim();
            let value = (coarse != EXCLUDED_CLASS).then(|| coarse.to_lowercase());
            if entries.insert(fine.clone(), value).is_some() {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    message: format!("duplicate entry {fine:?}"),
                });
            }
        }
        Ok(RelationNameMap { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn default_rst() -> Self {
        Self::parse(DEFAULT_RST_NAME_MAP, Path::new("rst_name_map.tsv")).expect("shipped map parses")
    }

    /// Case-insensitive; a trailing `-e` (embedded variant) is ignored when the
    /// exact name is not listed.
    pub fn lookup(&self, fine: &str) -> NameLookup<'_> {
        let key = fine.trim().to_lowercase();
        let hit = self
            .entries
            .get(&key)
            .or_else(|| key.strip_suffix("-e").and_then(|k| self.entries.get(k)));
        match hit {
            Some(Some(c)) => NameLookup::Class(c),
            Some(None) => NameLookup::Excluded,
            None => NameLookup::Unknown,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct coarse classes, alphabetically.
    pub fn coarse_classes(&self) -> Vec<String> {
        self.entries
            .values()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Taxonomy over the coarse classes with the shipped descriptions attached.
    pub fn taxonomy(&self, framework_name: &str) -> Result<RelationTaxonomy> {
        let tax = RelationTaxonomy::from_names(framework_name, &self.coarse_classes())?;
        Ok(attach_descriptions(&tax, &parse_label_descriptions(DEFAULT_DESCRIPTIONS)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_map_has_sixteen_classes() {
        let m = RelationNameMap::default_rst();
        assert_eq!(m.coarse_classes().len(), 16);
        assert_eq!(m.lookup("elaboration-additional-e"), NameLookup::Class("elaboration"));
        assert_eq!(m.lookup("Contrast"), NameLookup::Class("contrast"));
        assert_eq!(m.lookup("TextualOrganization"), NameLookup::Class("textual-organization"));
        assert_eq!(m.lookup("attribution-e"), NameLookup::Excluded);
        assert_eq!(m.lookup("foo"), NameLookup::Unknown);
        let tax = m.taxonomy("RST").unwrap();
        assert!(tax.labels().iter().all(|l| l.description.is_some()), "{:?}", tax.labels());
    }

    #[test]
    fn duplicate_entries_rejected() {
        assert!(RelationNameMap::parse("a\tb\nA\tc\n", Path::new("x")).is_err());
    }
}
