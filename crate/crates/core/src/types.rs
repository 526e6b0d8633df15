//! Domain types shared by every stage: relation instances, label inventories,
//! experiment configuration and dataset splits.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Framework {
    Rst,
    Pdtb,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RelationKind {
    Explicit,
    Implicit,
    Other,
    Na,
}

impl FromStr for RelationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "explicit" => Ok(RelationKind::Explicit),
            "implicit" => Ok(RelationKind::Implicit),
            "na" | "" => Ok(RelationKind::Na),
            // AltLex, AltLexC, Hypophora, EntRel, NoRel
            _ => Ok(RelationKind::Other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum InstanceSource {
    Original,
    Augmented,
    Relabeled,
}

/// One argument pair with its relation label.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationInstance {
    pub arg1: String,
    pub arg2: String,
    /// Row index into the associated [`RelationTaxonomy`].
    pub label: usize,
    pub framework: Framework,
    pub relation_kind: RelationKind,
    pub connective: Option<String>,
    pub doc_id: String,
    pub source: InstanceSource,
}

impl RelationInstance {
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.label >= k {
            return Err(Error::LabelOutOfRange { label: self.label, k });
        }
        if self.arg1.trim().is_empty() {
            return Err(Error::InvalidInstance(format!("empty arg1 in document {}", self.doc_id)));
        }
        if self.arg2.trim().is_empty() {
            return Err(Error::InvalidInstance(format!("empty arg2 in document {}", self.doc_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy_path: Option<Vec<String>>,
}

impl LabelRecord {
    pub fn named(name: impl Into<String>) -> Self {
        LabelRecord {
            name: name.into(),
            description: None,
            hierarchy_path: None,
        }
    }
}

/// An ordered label inventory. Label id `l` is the position of the label in
/// `labels` and the row index of its embedding everywhere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTaxonomy")]
pub struct RelationTaxonomy {
    pub framework_name: String,
    labels: Vec<LabelRecord>,
}

#[derive(Deserialize)]
struct RawTaxonomy {
    framework_name: String,
    labels: Vec<LabelRecord>,
}

impl TryFrom<RawTaxonomy> for RelationTaxonomy {
    type Error = Error;

    fn try_from(raw: RawTaxonomy) -> Result<Self> {
        RelationTaxonomy::new(raw.framework_name, raw.labels)
    }
}

impl RelationTaxonomy {
    pub fn new(framework_name: impl Into<String>, labels: Vec<LabelRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for label in &labels {
            if label.name.trim().is_empty() {
                return Err(Error::InvalidTaxonomy("empty label name".into()));
            }
            if !seen.insert(label.name.as_str()) {
                return Err(Error::InvalidTaxonomy(format!("duplicate label name {:?}", label.name)));
            }
        }
        let with_paths = labels.iter().filter(|l| l.hierarchy_path.is_some()).count();
        if with_paths != 0 {
            if with_paths != labels.len() {
                return Err(Error::InvalidTaxonomy(
                    "hierarchy paths must be given for all labels or none".into(),
                ));
            }
            let depth = labels[0].hierarchy_path.as_ref().map_or(0, Vec::len);
            if depth == 0 || labels.iter().any(|l| l.hierarchy_path.as_ref().map_or(0, Vec::len) != depth) {
                return Err(Error::InvalidTaxonomy("hierarchy paths must have equal, non-zero depth".into()));
            }
        }
        Ok(RelationTaxonomy {
            framework_name: framework_name.into(),
            labels,
        })
    }

    /// Taxonomy with bare label names, no descriptions or hierarchy.
    pub fn from_names<S: AsRef<str>>(framework_name: impl Into<String>, names: &[S]) -> Result<Self> {
        Self::new(
            framework_name,
            names.iter().map(|n| LabelRecord::named(n.as_ref())).collect(),
        )
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[LabelRecord] {
        &self.labels
    }

    pub fn name(&self, label: usize) -> &str {
        &self.labels[label].name
    }

    pub fn names(&self) -> Vec<&str> {
        self.labels.iter().map(|l| l.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.name == name)
    }

    /// Lenient lookup: exact name, then case-insensitive name, then a unique
    /// case-insensitive match on the last dot-separated segment
    /// (`"cause"` finds `"Contingency.Cause"`).
    pub fn find_label(&self, name: &str) -> Option<usize> {
        if let Some(i) = self.index_of(name) {
            return Some(i);
        }
        let wanted = name.trim().to_lowercase();
        if let Some(i) = self.labels.iter().position(|l| l.name.to_lowercase() == wanted) {
            return Some(i);
        }
        let mut hits = self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.name.rsplit('.').next().map(str::to_lowercase).as_deref() == Some(&wanted));
        match (hits.next(), hits.next()) {
            (Some((i, _)), None) => Some(i),
            _ => None,
        }
    }

    /// Text fed to pretrained label encoders: the lowercase name with
    /// hierarchy separators replaced by spaces.
    pub fn label_text(&self, label: usize) -> String {
        self.labels[label]
            .name
            .to_lowercase()
            .replace(['.', '_'], " ")
    }

    pub fn hierarchy_depth(&self) -> usize {
        self.labels
            .first()
            .and_then(|l| l.hierarchy_path.as_ref())
            .map_or(0, Vec::len)
    }

    /// Level-`level` (1-based) parent groups: the ordered list of distinct
    /// ancestor names and, for every label, the index of its ancestor.
    pub fn parents_at_level(&self, level: usize) -> Result<(Vec<String>, Vec<usize>)> {
        let depth = self.hierarchy_depth();
        if level == 0 || level > depth {
            return Err(Error::InvalidTaxonomy(format!(
                "taxonomy {} has hierarchy depth {depth}, level {level} requested",
                self.framework_name
            )));
        }
        let mut groups: Vec<String> = Vec::new();
        let mut assignment = Vec::with_capacity(self.k());
        for label in &self.labels {
            let path = label.hierarchy_path.as_ref().expect("checked depth");
            let key = path[..level].join(".");
            let idx = match groups.iter().position(|g| *g == key) {
                Some(i) => i,
                None => {
                    groups.push(key);
                    groups.len() - 1
                }
            };
            assignment.push(idx);
        }
        Ok((groups, assignment))
    }

    pub fn with_framework_name(mut self, name: impl Into<String>) -> Self {
        self.framework_name = name.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LabelEncoderKind {
    PretrainedA,
    PretrainedB,
    Random,
    Description,
    Hierarchy,
}

impl LabelEncoderKind {
    /// Kinds whose initial table comes from a pretrained text encoder.
    pub fn is_pretrained_family(self) -> bool {
        !matches!(self, LabelEncoderKind::Random)
    }
}

impl FromStr for LabelEncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "pretrained_a" | "bert" => Ok(LabelEncoderKind::PretrainedA),
            "pretrained_b" | "roberta" => Ok(LabelEncoderKind::PretrainedB),
            "random" | "rand" => Ok(LabelEncoderKind::Random),
            "description" | "desc" => Ok(LabelEncoderKind::Description),
            "hierarchy" | "hier" => Ok(LabelEncoderKind::Hierarchy),
            other => Err(Error::InvalidConfig(format!("unknown label encoder kind {other:?}"))),
        }
    }
}

impl fmt::Display for LabelEncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LabelEncoderKind::PretrainedA => "pretrained_a",
            LabelEncoderKind::PretrainedB => "pretrained_b",
            LabelEncoderKind::Random => "random",
            LabelEncoderKind::Description => "description",
            LabelEncoderKind::Hierarchy => "hierarchy",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(SplitName::Train),
            "dev" | "validation" => Ok(SplitName::Dev),
            "test" => Ok(SplitName::Test),
            other => Err(Error::InvalidConfig(format!("unknown split {other:?}"))),
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        })
    }
}

/// Which of the four training objectives are summed into the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LossToggles {
    pub icl: bool,
    pub lcl: bool,
    pub lec: bool,
    pub ice: bool,
}

impl Default for LossToggles {
    fn default() -> Self {
        LossToggles::ALL
    }
}

impl LossToggles {
    pub const ALL: LossToggles = LossToggles {
        icl: true,
        lcl: true,
        lec: true,
        ice: true,
    };
    pub const ICE_ONLY: LossToggles = LossToggles {
        icl: false,
        lcl: false,
        lec: false,
        ice: true,
    };

    pub fn any(&self) -> bool {
        self.icl || self.lcl || self.lec || self.ice
    }

    /// True when the label table takes part in the objective.
    pub fn uses_label_table(&self) -> bool {
        self.icl || self.lcl || self.lec
    }
}

impl FromStr for LossToggles {
    type Err = Error;

    /// Comma-separated list of enabled terms, e.g. `icl,lcl,ice`.
    fn from_str(s: &str) -> Result<Self> {
        let mut t = LossToggles {
            icl: false,
            lcl: false,
            lec: false,
            ice: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "icl" => t.icl = true,
                "lcl" => t.lcl = true,
                "lec" => t.lec = true,
                "ice" => t.ice = true,
                "all" => t = LossToggles::ALL,
                other => return Err(Error::InvalidConfig(format!("unknown loss term {other:?}"))),
            }
        }
        if !t.any() {
            return Err(Error::InvalidConfig("at least one loss term must be enabled".into()));
        }
        Ok(t)
    }
}

impl fmt::Display for LossToggles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (on, name) in [(self.icl, "icl"), (self.lcl, "lcl"), (self.lec, "lec"), (self.ice, "ice")] {
            if on {
                parts.push(name);
            }
        }
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub temperature: f64,
    pub learning_rate: f64,
    /// Learning rate used by the cross-entropy-only classification baseline.
    pub baseline_learning_rate: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub label_encoder_kind: LabelEncoderKind,
    pub hier_penalties: Vec<f64>,
    pub loss_toggles: LossToggles,
    pub lcl_include_positives: bool,
    pub max_len_arg1: usize,
    pub max_len_arg2: usize,
    pub proxy_split: SplitName,
    /// Encoder output dimension; also the label-embedding dimension.
    pub dim: usize,
    pub vocab_size: usize,
    /// Checkpoint the input encoder starts from.
    pub encoder_checkpoint: String,
    pub pretrained_a_checkpoint: String,
    pub pretrained_b_checkpoint: String,
    pub prepend_connective: bool,
    /// Keep the input encoder at its checkpoint; only the label table and
    /// classification head are updated.
    pub freeze_input_encoder: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            temperature: 0.1,
            learning_rate: 1e-5,
            baseline_learning_rate: 5e-5,
            weight_decay: 0.01,
            grad_clip_norm: 1.0,
            max_epochs: 10,
            early_stop_patience: 6,
            batch_size: 32,
            seeds: vec![1, 2, 3],
            label_encoder_kind: LabelEncoderKind::PretrainedB,
            hier_penalties: vec![std::f64::consts::SQRT_2, 2.0],
            loss_toggles: LossToggles::ALL,
            lcl_include_positives: false,
            max_len_arg1: 100,
            max_len_arg2: 100,
            proxy_split: SplitName::Test,
            dim: 32,
            vocab_size: 4096,
            encoder_checkpoint: "tiny-bert".into(),
            pretrained_a_checkpoint: "tiny-bert".into(),
            pretrained_b_checkpoint: "tiny-roberta".into(),
            prepend_connective: false,
            freeze_input_encoder: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.temperature, "temperature")?;
        positive(self.learning_rate, "learning_rate")?;
        positive(self.baseline_learning_rate, "baseline_learning_rate")?;
        positive(self.grad_clip_norm, "grad_clip_norm")?;
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig("weight_decay must be non-negative".into()));
        }
        if self.early_stop_patience < 1 {
            return Err(Error::InvalidConfig("early_stop_patience must be at least 1".into()));
        }
        if self.max_epochs < 1 || self.batch_size < 1 {
            return Err(Error::InvalidConfig("max_epochs and batch_size must be at least 1".into()));
        }
        if !self.loss_toggles.any() {
            return Err(Error::InvalidConfig("at least one loss toggle must be on".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.dim == 0 || self.vocab_size < 8 {
            return Err(Error::InvalidConfig("dim must be positive and vocab_size at least 8".into()));
        }
        if self.max_len_arg1 == 0 || self.max_len_arg2 == 0 {
            return Err(Error::InvalidConfig("argument lengths must be positive".into()));
        }
        if self.label_encoder_kind == LabelEncoderKind::Hierarchy && self.hier_penalties.len() != 2 {
            return Err(Error::InvalidConfig("hier_penalties needs exactly two factors".into()));
        }
        Ok(())
    }
}

/// Train/dev/test partition of a dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplits {
    pub train: Vec<RelationInstance>,
    pub dev: Vec<RelationInstance>,
    pub test: Vec<RelationInstance>,
}

impl DatasetSplits {
    pub fn get(&self, split: SplitName) -> &[RelationInstance] {
        match split {
            SplitName::Train => &self.train,
            SplitName::Dev => &self.dev,
            SplitName::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-label instance counts, keyed by label id.
pub fn label_counts(instances: &[RelationInstance]) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for inst in instances {
        *counts.entry(inst.label).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_label_names_rejected() {
        let err = RelationTaxonomy::from_names("x", &["a", "a"]).unwrap_err();
        assert!(matches!(err, Error::InvalidTaxonomy(_)));
    }

    #[test]
    fn partial_hierarchy_rejected() {
        let labels = vec![
            LabelRecord {
                name: "a".into(),
                description: None,
                hierarchy_path: Some(vec!["X".into(), "a".into()]),
            },
            LabelRecord::named("b"),
        ];
        assert!(RelationTaxonomy::new("x", labels).is_err());
    }

    #[test]
    fn lenient_lookup_on_last_segment() {
        let tax = RelationTaxonomy::from_names("pdtb", &["Contingency.Cause", "Comparison.Contrast"]).unwrap();
        assert_eq!(tax.find_label("cause"), Some(0));
        assert_eq!(tax.find_label("Comparison.Contrast"), Some(1));
        assert_eq!(tax.find_label("condition"), None);
        assert_eq!(tax.label_text(0), "contingency cause");
    }

    #[test]
    fn toggles_parse_and_display() {
        let t: LossToggles = "icl, ice".parse().unwrap();
        assert!(t.icl && t.ice && !t.lcl && !t.lec);
        assert_eq!(t.to_string(), "icl,ice");
        assert!("".parse::<LossToggles>().is_err());
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.temperature, 0.1);
        assert_eq!(cfg.hier_penalties, vec![2f64.sqrt(), 2.0]);
        let mut bad = cfg.clone();
        bad.loss_toggles = LossToggles {
            icl: false,
            lcl: false,
            lec: false,
            ice: false,
        };
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.temperature = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn instance_validation() {
        let inst = RelationInstance {
            arg1: "a".into(),
            arg2: "  ".into(),
            label: 0,
            framework: Framework::Pdtb,
            relation_kind: RelationKind::Implicit,
            connective: None,
            doc_id: "wsj_0101".into(),
            source: InstanceSource::Original,
        };
        assert!(inst.validate(2).is_err());
        let ok = RelationInstance { arg2: "b".into(), ..inst };
        ok.validate(2).unwrap();
        assert!(matches!(ok.validate(0), Err(Error::LabelOutOfRange { .. })));
    }
}
