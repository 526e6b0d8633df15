//! On-disk form of a trained model.
//!
//! Layout of an artifact directory:
//!
//! ```text
//! artifact.json     seed, model kind, file format version
//! config.json       ExperimentConfig used for the run
//! taxonomy.json     RelationTaxonomy (label order = table row order)
//! label_table.tsv   one row per label: name, then d floats
//! metrics.json      MetricsReport
//! model.bin         encoder and head parameters
//! training_log.json per-step and per-epoch records
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_taxonomy, save_taxonomy};
use crate::encoders::{LabelEmbeddingTable, TableProvenance};
use crate::error::{Error, Result};
use crate::evaluation::EvalMetrics;
use crate::model::{Model, ModelKind};
use crate::training::TrainingLog;
use crate::types::{ExperimentConfig, LossToggles, RelationTaxonomy};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub eval: EvalMetrics,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_dev_loss: f64,
    pub max_clipped_norm: f64,
    pub toggles: LossToggles,
    pub model_kind: ModelKind,
}

#[derive(Debug, Clone)]
pub struct TrainedArtifact {
    pub config: ExperimentConfig,
    pub taxonomy: RelationTaxonomy,
    pub label_table: LabelEmbeddingTable,
    pub model: Model,
    pub metrics: MetricsReport,
    pub seed: u64,
    pub log: TrainingLog,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArtifactHeader {
    format_version: u32,
    seed: u64,
    model_kind: ModelKind,
    provenance: TableProvenance,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Writes the table as `name<TAB>v1<TAB>...`. Floats use the shortest
/// representation that round-trips exactly.
pub fn write_label_table_tsv(path: &Path, table: &Array2<f64>, taxonomy: &RelationTaxonomy) -> Result<()> {
    let mut out = String::new();
    for (l, row) in table.rows().into_iter().enumerate() {
        out.push_str(taxonomy.name(l));
        for v in row {
            out.push('\t');
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    write(path, out)
}

pub fn read_label_table_tsv(path: &Path, taxonomy: &RelationTaxonomy) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let mut fields = line.split('\t');
        let name = fields.next().unwrap_or_default();
        let vals = fields
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(i + 1, format!("{f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((name.to_string(), vals));
    }
    if rows.len() != taxonomy.k() {
        return Err(Error::Validation(format!(
            "{}: {} label rows but taxonomy has {} labels",
            path.display(),
            rows.len(),
            taxonomy.k()
        )));
    }
    let d = rows.first().map(|r| r.1.len()).unwrap_or(0);
    let mut m = Array2::zeros((rows.len(), d));
    for (l, (name, vals)) in rows.iter().enumerate() {
        if name != taxonomy.name(l) {
            return Err(parse_err(
                l + 1,
                format!("expected label {:?}, found {name:?}", taxonomy.name(l)),
            ));
        }
        if vals.len() != d {
            return Err(parse_err(l + 1, format!("expected {d} values, found {}", vals.len())));
        }
        m.row_mut(l).assign(&ndarray::ArrayView1::from(vals.as_slice()));
    }
    Ok(m)
}

pub fn save_artifact(dir: impl AsRef<Path>, artifact: &TrainedArtifact) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = ArtifactHeader {
        format_version: FORMAT_VERSION,
        seed: artifact.seed,
        model_kind: artifact.model.kind,
        provenance: artifact.label_table.provenance.clone(),
    };
    write(&dir.join("artifact.json"), serde_json::to_string_pretty(&header)?)?;
    write(&dir.join("config.json"), serde_json::to_string_pretty(&artifact.config)?)?;
    save_taxonomy(dir.join("taxonomy.json"), &artifact.taxonomy)?;
    write_label_table_tsv(&dir.join("label_table.tsv"), artifact.model.label_rows(), &artifact.taxonomy)?;
    write(&dir.join("metrics.json"), serde_json::to_string_pretty(&artifact.metrics)?)?;
    write(&dir.join("model.bin"), artifact.model.state_to_bytes())?;
    write(&dir.join("training_log.json"), serde_json::to_string(&artifact.log)?)?;
    Ok(())
}

pub fn load_artifact(dir: impl AsRef<Path>) -> Result<TrainedArtifact> {
    let dir = dir.as_ref();
    let header: ArtifactHeader = read_json(&dir.join("artifact.json"))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Validation(format!(
            "{}: unsupported artifact version {}",
            dir.display(),
            header.format_version
        )));
    }
    let config: ExperimentConfig = read_json(&dir.join("config.json"))?;
    let taxonomy = load_taxonomy(dir.join("taxonomy.json"))?;
    let table = read_label_table_tsv(&dir.join("label_table.tsv"), &taxonomy)?;
    let metrics: MetricsReport = read_json(&dir.join("metrics.json"))?;
    let model_path = dir.join("model.bin");
    let bytes = fs::read(&model_path).map_err(|e| Error::io(&model_path, e))?;
    // The classification baseline stores its head rows as the label table;
    // its own table parameter is unused and kept at zero.
    let table = if header.model_kind.predicts_with_table() {
        table
    } else {
        Array2::zeros(table.raw_dim())
    };
    let model = Model::state_from_bytes(&bytes, table)
        .map_err(|e| Error::Validation(format!("{}: {e}", model_path.display())))?;
    let log_path = dir.join("training_log.json");
    let log = if log_path.exists() {
        read_json(&log_path)?
    } else {
        TrainingLog::default()
    };
    let label_table = LabelEmbeddingTable::new(model.label_rows().clone(), taxonomy.clone(), header.provenance)?;
    Ok(TrainedArtifact {
        config,
        taxonomy,
        label_table,
        model,
        metrics,
        seed: header.seed,
        log,
    })
}
