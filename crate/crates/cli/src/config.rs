//! The experiment file: one TOML document describing data, training variants,
//! alignment and extrinsic evaluation.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use discalign::ingest::{KindFilter, DEFAULT_MIN_COUNT};
use discalign::{ExperimentConfig, LabelEncoderKind, LossToggles};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(rename = "framework")]
    pub frameworks: Vec<FrameworkConfig>,
    #[serde(default)]
    pub train: TrainPlan,
    #[serde(default)]
    pub align: Option<AlignConfig>,
    #[serde(default)]
    pub extrinsic: Option<ExtrinsicConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameworkConfig {
    pub name: String,
    #[serde(flatten)]
    pub data: DataSource,
    #[serde(default)]
    pub augment: Option<AugmentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic {
        classes: usize,
        /// Instances per class in train, dev and test.
        per_class: [usize; 3],
        seed: u64,
        /// Rename and reorder the classes: old label `l` becomes
        /// `names[permutation[l]]`.
        #[serde(default)]
        names: Option<Vec<String>>,
        #[serde(default)]
        permutation: Option<Vec<usize>>,
    },
    Rst {
        train_dir: PathBuf,
        test_dir: PathBuf,
        #[serde(default)]
        name_map: Option<PathBuf>,
        #[serde(default = "default_dev_fraction")]
        dev_fraction: f64,
        #[serde(default = "default_split_seed")]
        split_seed: u64,
    },
    Pdtb {
        relations: PathBuf,
        #[serde(default = "default_min_count")]
        min_count: usize,
        #[serde(default)]
        kinds: RelationKinds,
    },
}

fn default_dev_fraction() -> f64 {
    0.1
}

fn default_split_seed() -> u64 {
    1
}

fn default_min_count() -> usize {
    DEFAULT_MIN_COUNT
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKinds {
    #[default]
    Total,
    Explicit,
    Implicit,
}

impl RelationKinds {
    pub fn filter(self) -> KindFilter {
        match self {
            RelationKinds::Total => KindFilter::TOTAL,
            RelationKinds::Explicit => KindFilter::EXPLICIT,
            RelationKinds::Implicit => KindFilter::IMPLICIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    #[serde(default = "default_pivot")]
    pub pivot: String,
    #[serde(default)]
    pub skip_labels: Vec<String>,
    /// Recorded translations (JSON lines) replayed instead of a live service.
    #[serde(default)]
    pub translations: Option<PathBuf>,
    /// LibreTranslate-compatible endpoint.
    #[serde(default)]
    pub endpoint: Option<String>,
}

fn default_pivot() -> String {
    "fr".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Classifier,
    Labelemb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainPlan {
    /// Extra label-encoder variants besides the configured one.
    #[serde(default)]
    pub label_encoders: Vec<LabelEncoderKind>,
    /// Loss-term subsets, e.g. `"icl,lec"`.
    #[serde(default)]
    pub ablations: Vec<String>,
    #[serde(default = "default_baselines")]
    pub baselines: Vec<Baseline>,
}

fn default_baselines() -> Vec<Baseline> {
    vec![Baseline::Classifier]
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            label_encoders: Vec::new(),
            ablations: Vec::new(),
            baselines: default_baselines(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignConfig {
    /// Framework whose data is relabeled.
    pub source: String,
    /// Framework whose taxonomy the data is relabeled into.
    pub target: String,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default)]
    pub exclude: Vec<String>,
    /// Hand-edited map used for relabeling instead of the generated one.
    #[serde(default)]
    pub map_file: Option<PathBuf>,
}

fn default_threshold() -> f64 {
    0.10
}

fn default_top_n() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtrinsicConfig {
    /// Defaults to the experiment seeds.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// Drop relabeled instances from documents in the target's dev or test
    /// split instead of refusing to merge.
    #[serde(default = "default_true")]
    pub drop_overlapping_documents: bool,
}

fn default_true() -> bool {
    true
}

/// A parsed config together with its origin and content hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub config: PipelineConfig,
    pub hash: String,
}

impl PipelineConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = origin.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate().map_err(|message| CliError::Config {
            path: origin.to_path_buf(),
            message,
        })?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for fw in &mut self.frameworks {
            match &mut fw.data {
                DataSource::Synthetic { .. } => {}
                DataSource::Rst {
                    train_dir,
                    test_dir,
                    name_map,
                    ..
                } => {
                    fix(train_dir);
                    fix(test_dir);
                    if let Some(p) = name_map {
                        fix(p);
                    }
                }
                DataSource::Pdtb { relations, .. } => fix(relations),
            }
            if let Some(p) = fw.augment.as_mut().and_then(|a| a.translations.as_mut()) {
                fix(p);
            }
        }
        if let Some(p) = self.align.as_mut().and_then(|a| a.map_file.as_mut()) {
            fix(p);
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.experiment.validate().map_err(|e| e.to_string())?;
        if self.frameworks.is_empty() {
            return Err("at least one [[framework]] is required".into());
        }
        let mut seen = HashSet::new();
        for fw in &self.frameworks {
            let ok = !fw.name.is_empty() && fw.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
            if !ok {
                return Err(format!("framework name {:?} must be non-empty ASCII letters, digits, '-' or '_'", fw.name));
            }
            if !seen.insert(fw.name.as_str()) {
                return Err(format!("framework {:?} is defined twice", fw.name));
            }
            if let Some(a) = &fw.augment {
                if a.translations.is_some() == a.endpoint.is_some() {
                    return Err(format!("framework {}: augment needs exactly one of `translations` or `endpoint`", fw.name));
                }
            }
        }
        for abl in &self.train.ablations {
            abl.parse::<LossToggles>().map_err(|e| format!("ablation {abl:?}: {e}"))?;
        }
        if let Some(a) = &self.align {
            for side in [&a.source, &a.target] {
                if !seen.contains(side.as_str()) {
                    return Err(format!("[align] refers to unknown framework {side:?}"));
                }
            }
            if a.source == a.target {
                return Err("[align] source and target must differ".into());
            }
            if !(0.0..1.0).contains(&a.threshold) {
                return Err(format!("[align] threshold must be in [0, 1), got {}", a.threshold));
            }
            if a.top_n == 0 {
                return Err("[align] top_n must be at least 1".into());
            }
        }
        if self.extrinsic.is_some() && self.align.is_none() {
            return Err("[extrinsic] needs an [align] section".into());
        }
        if let Some(seeds) = self.extrinsic.as_ref().and_then(|e| e.seeds.as_ref()) {
            if seeds.is_empty() {
                return Err("[extrinsic] seeds must not be empty".into());
            }
        }
        Ok(())
    }

    pub fn framework(&self, name: &str) -> Option<&FrameworkConfig> {
        self.frameworks.iter().find(|f| f.name == name)
    }

    pub fn extrinsic_seeds(&self) -> Vec<u64> {
        self.extrinsic
            .as_ref()
            .and_then(|e| e.seeds.clone())
            .unwrap_or_else(|| self.experiment.seeds.clone())
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form. Paths
    /// are already resolved, so the hash also pins the data location.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))[..12].to_string()
    }
}

impl LoadedConfig {
    /// Reads the config and applies a seed override before hashing.
    pub fn load(path: &Path, seeds: Option<Vec<u64>>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut config = PipelineConfig::parse(&text, path)?;
        if let Some(seeds) = seeds {
            if seeds.is_empty() {
                return Err(CliError::Invalid("--seeds must name at least one seed".into()));
            }
            config.experiment.seeds = seeds;
        }
        let hash = config.hash();
        Ok(LoadedConfig {
            path: path.to_path_buf(),
            config,
            hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[[framework]]
name = "syn"
kind = "synthetic"
classes = 3
per_class = [4, 2, 2]
seed = 1
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = PipelineConfig::parse(MINIMAL, Path::new("x/exp.toml")).unwrap();
        assert_eq!(cfg.experiment, ExperimentConfig::default());
        assert_eq!(cfg.train.baselines, [Baseline::Classifier]);
        assert!(cfg.align.is_none());
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let text = r#"
[[framework]]
name = "pdtb"
kind = "pdtb"
relations = "data/rel.tsv"
"#;
        let cfg = PipelineConfig::parse(text, Path::new("/exp/run.toml")).unwrap();
        match &cfg.frameworks[0].data {
            DataSource::Pdtb { relations, min_count, .. } => {
                assert_eq!(relations, Path::new("/exp/data/rel.tsv"));
                assert_eq!(*min_count, DEFAULT_MIN_COUNT);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_align_framework_is_rejected() {
        let text = format!("{MINIMAL}\n[align]\nsource = \"syn\"\ntarget = \"other\"\n");
        let err = PipelineConfig::parse(&text, Path::new("exp.toml")).unwrap_err();
        assert!(err.to_string().contains("unknown framework"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn hash_changes_with_content() {
        let a = PipelineConfig::parse(MINIMAL, Path::new("exp.toml")).unwrap();
        let mut b = a.clone();
        b.experiment.seeds = vec![9];
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 12);
    }
}
