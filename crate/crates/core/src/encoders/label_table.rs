use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::EncoderState;
use crate::error::{Error, Result};
use crate::types::{ExperimentConfig, LabelEncoderKind, LabelRecord, RelationTaxonomy};

/// RNG stream used for RANDOM label-table initialisation.
pub const LABEL_INIT_STREAM: u64 = 2;

/// The `k x d` table of label vectors. Row `l` is the embedding of label `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEmbeddingTable {
    pub matrix: Array2<f64>,
    pub taxonomy: RelationTaxonomy,
    pub provenance: TableProvenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableProvenance {
    pub encoder_kind: LabelEncoderKind,
    /// Checkpoint the input encoder of the producing model started from.
    pub input_encoder: String,
    /// Rows are classifier-head weights rather than learned label embeddings.
    #[serde(default)]
    pub classifier_head: bool,
}

impl LabelEmbeddingTable {
    pub fn new(matrix: Array2<f64>, taxonomy: RelationTaxonomy, provenance: TableProvenance) -> Result<Self> {
        if matrix.nrows() != taxonomy.k() {
            return Err(Error::Validation(format!(
                "label table has {} rows but taxonomy {} has {} labels",
                matrix.nrows(),
                taxonomy.framework_name,
                taxonomy.k()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("label table contains non-finite values".into()));
        }
        Ok(LabelEmbeddingTable {
            matrix,
            taxonomy,
            provenance,
        })
    }

    pub fn k(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row(&self, label: usize) -> ArrayView1<'_, f64> {
        self.matrix.row(label)
    }
}

/// Symmetric uniform range used for RANDOM initialisation, `sqrt(6 / (k + d))`.
pub fn random_init_range(k: usize, d: usize) -> f64 {
    (6.0 / (k + d) as f64).sqrt()
}

/// Builds the initial label table for `kind`.
///
/// Pretrained kinds encode the label text (`[CLS] text [SEP]`) with the named
/// checkpoint; DESCRIPTION encodes `[CLS] label [SEP] description [SEP]`;
/// HIERARCHY encodes the label text and relies on the hierarchy-weighted loss
/// during training. The result is a free, trainable parameter in all cases.
pub fn init_label_table(
    taxonomy: &RelationTaxonomy,
    kind: LabelEncoderKind,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<LabelEmbeddingTable> {
    let k = taxonomy.k();
    let d = config.dim;
    let provenance = TableProvenance {
        encoder_kind: kind,
        input_encoder: config.encoder_checkpoint.clone(),
        classifier_head: false,
    };
    let max_len = config.max_len_arg1;
    let matrix = match kind {
        LabelEncoderKind::Random => {
            let r = random_init_range(k, d);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(LABEL_INIT_STREAM);
            Array2::from_shape_simple_fn((k, d), || rng.gen_range(-r..=r))
        }
        LabelEncoderKind::PretrainedA | LabelEncoderKind::PretrainedB | LabelEncoderKind::Hierarchy => {
            if kind == LabelEncoderKind::Hierarchy {
                if let Some(l) = taxonomy.labels().iter().find(|l| l.hierarchy_path.is_none()) {
                    return Err(Error::InvalidTaxonomy(format!("label {:?} has no hierarchy path", l.name)));
                }
                if taxonomy.hierarchy_depth() < 2 {
                    return Err(Error::InvalidTaxonomy("hierarchy encoder needs at least two levels".into()));
                }
            }
            let checkpoint = if kind == LabelEncoderKind::PretrainedB {
                &config.pretrained_b_checkpoint
            } else {
                &config.pretrained_a_checkpoint
            };
            let enc = EncoderState::pretrained(checkpoint, config.vocab_size, d)?;
            let mut m = Array2::zeros((k, d));
            for l in 0..k {
                m.row_mut(l).assign(&enc.encode_text(&taxonomy.label_text(l), max_len));
            }
            m
        }
        LabelEncoderKind::Description => {
            let enc = EncoderState::pretrained(&config.pretrained_a_checkpoint, config.vocab_size, d)?;
            let tok = enc.tokenizer();
            let mut m = Array2::zeros((k, d));
            for (l, label) in taxonomy.labels().iter().enumerate() {
                let description = label
                    .description
                    .as_deref()
                    .filter(|s| !s.trim().is_empty())
                    .ok_or_else(|| Error::InvalidTaxonomy(format!("label {:?} has no description", label.name)))?;
                let input = tok.encode_pair(&taxonomy.label_text(l), description, max_len, config.max_len_arg2);
                m.row_mut(l).assign(&enc.forward(&input).output());
            }
            m
        }
    };
    LabelEmbeddingTable::new(matrix, taxonomy.clone(), provenance)
}

/// Descriptions shipped with the crate, keyed by lowercase label name.
pub const DEFAULT_DESCRIPTIONS: &str = include_str!("../../data/label_descriptions.tsv");

/// Parses a `name<TAB>description` file; `#` lines are comments.
pub fn parse_label_descriptions(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('\t'))
        .map(|(name, desc)| (name.trim().to_lowercase(), desc.trim().to_string()))
        .collect()
}

pub fn load_label_descriptions(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_label_descriptions(&text))
}

/// Fills in missing descriptions by lowercase full name, then by last
/// dot-separated segment.
pub fn attach_descriptions(taxonomy: &RelationTaxonomy, descriptions: &HashMap<String, String>) -> RelationTaxonomy {
    let labels: Vec<LabelRecord> = taxonomy
        .labels()
        .iter()
        .map(|l| {
            let mut l = l.clone();
            if l.description.is_none() {
                let full = l.name.to_lowercase();
                let last = full.rsplit('.').next().unwrap_or(&full).to_string();
                l.description = descriptions.get(&full).or_else(|| descriptions.get(&last)).cloned();
            }
            l
        })
        .collect();
    RelationTaxonomy::new(taxonomy.framework_name.clone(), labels).expect("names and paths unchanged")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ExperimentConfig {
        ExperimentConfig {
            dim: 8,
            vocab_size: 256,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn random_is_seeded_and_bounded() {
        let tax = RelationTaxonomy::from_names("t", &["a", "b", "c", "d"]).unwrap();
        let a = init_label_table(&tax, LabelEncoderKind::Random, &config(), 11).unwrap();
        let b = init_label_table(&tax, LabelEncoderKind::Random, &config(), 11).unwrap();
        let c = init_label_table(&tax, LabelEncoderKind::Random, &config(), 12).unwrap();
        assert_eq!(a.matrix, b.matrix);
        assert_ne!(a.matrix, c.matrix);
        assert_eq!(a.matrix.dim(), (4, 8));
        let r = random_init_range(4, 8);
        assert!(a.matrix.iter().all(|v| v.abs() <= r));
    }

    #[test]
    fn description_required() {
        let mut labels = vec![LabelRecord::named("cause"), LabelRecord::named("contrast")];
        labels[0].description = Some("one situation brings about another".into());
        let tax = RelationTaxonomy::new("t", labels).unwrap();
        match init_label_table(&tax, LabelEncoderKind::Description, &config(), 1) {
            Err(Error::InvalidTaxonomy(msg)) => assert!(msg.contains("contrast")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hierarchy_required() {
        let tax = RelationTaxonomy::from_names("t", &["a", "b"]).unwrap();
        assert!(init_label_table(&tax, LabelEncoderKind::Hierarchy, &config(), 1).is_err());
    }

    #[test]
    fn pretrained_rows_reproduce_label_text_encoding() {
        let tax = RelationTaxonomy::from_names("pdtb", &["Contingency.Cause", "Comparison.Contrast"]).unwrap();
        let cfg = config();
        let table = init_label_table(&tax, LabelEncoderKind::PretrainedA, &cfg, 5).unwrap();
        let enc = EncoderState::pretrained(&cfg.pretrained_a_checkpoint, cfg.vocab_size, cfg.dim).unwrap();
        let again = enc.encode_text("contingency cause", cfg.max_len_arg1);
        assert_eq!(table.row(0), again.view());
        // seed does not affect pretrained initialisation
        let other = init_label_table(&tax, LabelEncoderKind::PretrainedA, &cfg, 6).unwrap();
        assert_eq!(table.matrix, other.matrix);
        let b = init_label_table(&tax, LabelEncoderKind::PretrainedB, &cfg, 5).unwrap();
        assert_ne!(table.matrix, b.matrix);
    }

    #[test]
    fn row_count_must_match_taxonomy() {
        let tax = RelationTaxonomy::from_names("t", &["a", "b"]).unwrap();
        let prov = TableProvenance {
            encoder_kind: LabelEncoderKind::Random,
            input_encoder: "x".into(),
            classifier_head: false,
        };
        assert!(LabelEmbeddingTable::new(Array2::ones((3, 4)), tax, prov).is_err());
    }

    #[test]
    fn shipped_descriptions_cover_known_labels() {
        let d = parse_label_descriptions(DEFAULT_DESCRIPTIONS);
        for name in ["cause", "elaboration", "contingency.cause", "concession"] {
            assert!(d.contains_key(name), "{name}");
        }
        let tax = RelationTaxonomy::from_names("pdtb", &["Comparison.Concession"]).unwrap();
        assert!(attach_descriptions(&tax, &d).labels()[0].description.is_some());
    }
}
