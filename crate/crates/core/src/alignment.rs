//! Cross-framework label similarity, mapping reports, relabeling maps and
//! the ensemble used for extrinsic evaluation.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::artifact::TrainedArtifact;
use crate::encoders::LabelEmbeddingTable;
use crate::error::{Error, Result};
use crate::evaluation::classification_metrics;
use crate::linalg::{argmax, cosine_matrix};
use crate::training::{train_with_spec, RunSpec};
use crate::types::{DatasetSplits, ExperimentConfig, InstanceSource, LabelEncoderKind, LossToggles, RelationInstance, RelationTaxonomy};

/// Map shipped with the crate: PDTB explicit senses to RST classes.
pub const DEFAULT_PDTB_RST_MAP: &str = include_str!("../data/pdtb_rst_map.tsv");
/// Comparison map derived from an external study.
pub const EXTERNAL_PDTB_RST_MAP: &str = include_str!("../data/pdtb_rst_external_map.tsv");

/// `values[i][j]` is the cosine between source label `i` and target label `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossFrameworkMatrix {
    pub source: RelationTaxonomy,
    pub target: RelationTaxonomy,
    pub values: Array2<f64>,
}

impl CrossFrameworkMatrix {
    /// The other orientation (target rows, source columns).
    pub fn transposed(&self) -> Self {
        CrossFrameworkMatrix {
            source: self.target.clone(),
            target: self.source.clone(),
            values: self.values.t().to_owned(),
        }
    }
}

/// Why two tables cannot be compared, if they cannot.
pub fn comparability_issue(a: &LabelEmbeddingTable, b: &LabelEmbeddingTable) -> Option<String> {
    for t in [a, b] {
        if t.provenance.classifier_head {
            return Some(format!(
                "table for {} holds classifier-head weights, not label embeddings",
                t.taxonomy.framework_name
            ));
        }
        if !t.provenance.encoder_kind.is_pretrained_family() {
            return Some(format!(
                "table for {} was initialised with {}; only tables started from a pretrained label encoder share a space",
                t.taxonomy.framework_name, t.provenance.encoder_kind
            ));
        }
    }
    if a.provenance.input_encoder != b.provenance.input_encoder {
        return Some(format!(
            "input encoders differ ({} vs {})",
            a.provenance.input_encoder, b.provenance.input_encoder
        ));
    }
    None
}

/// Full `k x c` cosine matrix. Refuses tables that do not share an embedding
/// space (see [`comparability_issue`]).
pub fn cross_similarity(source: &LabelEmbeddingTable, target: &LabelEmbeddingTable) -> Result<CrossFrameworkMatrix> {
    if let Some(reason) = comparability_issue(source, target) {
        return Err(Error::Incomparable(reason));
    }
    cross_similarity_unchecked(source, target)
}

pub fn cross_similarity_unchecked(
    source: &LabelEmbeddingTable,
    target: &LabelEmbeddingTable,
) -> Result<CrossFrameworkMatrix> {
    Ok(CrossFrameworkMatrix {
        source: source.taxonomy.clone(),
        target: target.taxonomy.clone(),
        values: cosine_matrix(source.matrix.view(), target.matrix.view())?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub label: usize,
    pub name: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingRow {
    pub label: usize,
    pub name: String,
    /// Best targets above the threshold, most similar first. Empty when none
    /// qualifies.
    pub entries: Vec<MappingEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingReport {
    pub source_framework: String,
    pub target_framework: String,
    pub threshold: f64,
    pub top_n: usize,
    pub rows: Vec<MappingRow>,
    pub excluded: Vec<String>,
}

/// Indices of `row` above `threshold`, by decreasing value (lower index first
/// on ties), at most `top_n`.
pub fn rank_row(row: &[f64], threshold: f64, top_n: usize) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..row.len()).filter(|&j| row[j] > threshold).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.into_iter().take(top_n).map(|j| (j, row[j])).collect()
}

fn name_matches(taxonomy: &RelationTaxonomy, label: usize, wanted: &HashSet<String>) -> bool {
    let full = taxonomy.name(label).to_lowercase();
    let last = full.rsplit('.').next().unwrap_or(&full).to_string();
    wanted.contains(&full) || wanted.contains(&last)
}

/// Per-row ranking of targets. Labels named in `exclude` (either side,
/// case-insensitive, full name or last segment) are dropped from rows and
/// columns.
pub fn mapping_report(
    matrix: &CrossFrameworkMatrix,
    threshold: f64,
    top_n: usize,
    exclude: &[String],
) -> Result<MappingReport> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidConfig(format!("threshold must be in [-1, 1], got {threshold}")));
    }
    let wanted: HashSet<String> = exclude.iter().map(|s| s.trim().to_lowercase()).collect();
    let keep_cols: Vec<usize> = (0..matrix.target.k())
        .filter(|&j| !name_matches(&matrix.target, j, &wanted))
        .collect();
    let mut excluded = Vec::new();
    let mut rows = Vec::new();
    for i in 0..matrix.source.k() {
        if name_matches(&matrix.source, i, &wanted) {
            excluded.push(matrix.source.name(i).to_string());
            continue;
        }
        let row: Vec<f64> = keep_cols.iter().map(|&j| matrix.values[[i, j]]).collect();
        let entries = rank_row(&row, threshold, top_n)
            .into_iter()
            .map(|(pos, similarity)| MappingEntry {
                label: keep_cols[pos],
                name: matrix.target.name(keep_cols[pos]).to_string(),
                similarity,
            })
            .collect();
        rows.push(MappingRow {
            label: i,
            name: matrix.source.name(i).to_string(),
            entries,
        });
    }
    excluded.extend(
        (0..matrix.target.k())
            .filter(|j| !keep_cols.contains(j))
            .map(|j| matrix.target.name(j).to_string()),
    );
    Ok(MappingReport {
        source_framework: matrix.source.framework_name.clone(),
        target_framework: matrix.target.framework_name.clone(),
        threshold,
        top_n,
        rows,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MapProvenance {
    ThisMethod,
    ExternalTable,
}

impl fmt::Display for MapProvenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapProvenance::ThisMethod => "THIS_METHOD",
            MapProvenance::ExternalTable => "EXTERNAL_TABLE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapTarget {
    Label(String),
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub source: String,
    pub target: MapTarget,
    pub strength: Option<f64>,
    pub note: String,
}

/// Source label name to target label (or exclusion).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelingMap {
    pub provenance: MapProvenance,
    pub source_framework: String,
    pub target_framework: String,
    pub entries: Vec<MapEntry>,
}

fn parse_strength(raw: &str) -> std::result::Result<Option<f64>, String> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    if raw.contains(',') {
        let parts = raw
            .split(',')
            .map(|p| p.trim().trim_end_matches('%').parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        return Ok(Some(parts.iter().sum::<f64>() / parts.len() as f64 / 100.0));
    }
    if let Some(p) = raw.strip_suffix('%') {
        return p.trim().parse::<f64>().map(|v| Some(v / 100.0)).map_err(|e| format!("{raw:?}: {e}"));
    }
    raw.parse::<f64>().map(Some).map_err(|e| format!("{raw:?}: {e}"))
}

fn is_exclusion(target: &str) -> bool {
    matches!(target.trim(), "" | "—" | "-" | "–") || target.trim().eq_ignore_ascii_case("exclude")
}

impl RelabelingMap {
    /// Parses the tab-separated map format: `# key: value` header comments,
    /// an optional `source target strength note` header row, then one entry
    /// per line.
    pub fn parse(text: &str, origin: &Path, default_provenance: MapProvenance) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut map = RelabelingMap {
            provenance: default_provenance,
            source_framework: String::new(),
            target_framework: String::new(),
            entries: Vec::new(),
        };
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((key, value)) = comment.split_once(':') {
                    let value = value.trim();
                    match key.trim() {
                        "provenance" => {
                            map.provenance = serde_json::from_value(serde_json::Value::String(value.to_string()))
                                .map_err(|_| perr(lineno, format!("unknown provenance {value:?}")))?
                        }
                        "source" => map.source_framework = value.to_string(),
                        "target" => map.target_framework = value.to_string(),
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields[0].trim() == "source" {
                continue;
            }
            let source = fields[0].trim().to_string();
            let target_raw = fields.get(1).copied().unwrap_or("");
            let target = if is_exclusion(target_raw) {
                MapTarget::Exclude
            } else {
                MapTarget::Label(target_raw.trim().to_string())
            };
            let strength = parse_strength(fields.get(2).copied().unwrap_or("")).map_err(|m| perr(lineno, m))?;
            let note = fields.get(3).map(|s| s.trim().to_string()).unwrap_or_default();
            if !seen.insert(source.to_lowercase()) {
                return Err(perr(lineno, format!("duplicate source entry {source:?}")));
            }
            map.entries.push(MapEntry {
                source,
                target,
                strength,
                note,
            });
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path, MapProvenance::ThisMethod)
    }

    pub fn default_pdtb_rst() -> Self {
        Self::parse(DEFAULT_PDTB_RST_MAP, Path::new("pdtb_rst_map.tsv"), MapProvenance::ThisMethod)
            .expect("shipped map parses")
    }

    pub fn external_pdtb_rst() -> Self {
        Self::parse(EXTERNAL_PDTB_RST_MAP, Path::new("pdtb_rst_external_map.tsv"), MapProvenance::ExternalTable)
            .expect("shipped map parses")
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# provenance: {}\n# source: {}\n# target: {}\nsource\ttarget\tstrength\tnote\n",
            self.provenance, self.source_framework, self.target_framework
        );
        for e in &self.entries {
            let target = match &e.target {
                MapTarget::Label(l) => l.as_str(),
                MapTarget::Exclude => "EXCLUDE",
            };
            let strength = e.strength.map(|s| format!("{s:.2}")).unwrap_or_default();
            out.push_str(&format!("{}\t{target}\t{strength}\t{}\n", e.source, e.note));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Entry for a source label name: exact (case-insensitive) or by the last
    /// dot-separated segment.
    pub fn get(&self, source_name: &str) -> Option<&MapEntry> {
        let full = source_name.to_lowercase();
        let last = full.rsplit('.').next().unwrap_or(&full).to_string();
        self.entries
            .iter()
            .find(|e| e.source.to_lowercase() == full)
            .or_else(|| self.entries.iter().find(|e| e.source.to_lowercase() == last))
    }

    /// Top-1 target of every report row; rows with no qualifying target map
    /// to EXCLUDE.
    pub fn from_report(report: &MappingReport) -> Self {
        let entries = report
            .rows
            .iter()
            .map(|row| match row.entries.first() {
                Some(e) => MapEntry {
                    source: short_name(&row.name),
                    target: MapTarget::Label(short_name(&e.name)),
                    strength: Some(e.similarity),
                    note: String::new(),
                },
                None => MapEntry {
                    source: short_name(&row.name),
                    target: MapTarget::Exclude,
                    strength: None,
                    note: format!("no target above {:.2}", report.threshold),
                },
            })
            .collect();
        RelabelingMap {
            provenance: MapProvenance::ThisMethod,
            source_framework: report.source_framework.clone(),
            target_framework: report.target_framework.clone(),
            entries,
        }
    }
}

fn short_name(name: &str) -> String {
    name.rsplit('.').next().unwrap_or(name).to_lowercase()
}

/// Loads a map from an external study; provenance defaults to EXTERNAL_TABLE.
pub fn load_external_mapping(path: &Path) -> Result<RelabelingMap> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RelabelingMap::parse(&text, path, MapProvenance::ExternalTable)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDiff {
    pub source: String,
    pub auto: Option<MapTarget>,
    pub final_target: Option<MapTarget>,
}

/// Sources whose target differs between an automatically derived map and
/// the hand-edited final map.
pub fn diff_maps(auto: &RelabelingMap, final_map: &RelabelingMap) -> Vec<MapDiff> {
    let sources: BTreeSet<String> = auto
        .entries
        .iter()
        .chain(&final_map.entries)
        .map(|e| e.source.to_lowercase())
        .collect();
    sources
        .into_iter()
        .filter_map(|s| {
            let a = auto.get(&s).map(|e| e.target.clone());
            let f = final_map.get(&s).map(|e| e.target.clone());
            (a != f).then_some(MapDiff {
                source: s,
                auto: a,
                final_target: f,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RelabelResult {
    pub instances: Vec<RelationInstance>,
    pub relabeled: usize,
    pub dropped: usize,
}

/// Re-tags instances with target labels. EXCLUDE-mapped instances are
/// dropped; the original framework is kept on each instance.
pub fn relabel_dataset(
    instances: &[RelationInstance],
    source_taxonomy: &RelationTaxonomy,
    map: &RelabelingMap,
    target_taxonomy: &RelationTaxonomy,
) -> Result<RelabelResult> {
    let mut targets: Vec<Option<Option<usize>>> = vec![None; source_taxonomy.k()];
    let mut missing = BTreeSet::new();
    let mut unknown_targets = BTreeSet::new();
    for inst in instances {
        inst.validate(source_taxonomy.k())?;
        if targets[inst.label].is_some() {
            continue;
        }
        let name = source_taxonomy.name(inst.label);
        match map.get(name) {
            None => {
                missing.insert(name.to_string());
            }
            Some(e) => match &e.target {
                MapTarget::Exclude => targets[inst.label] = Some(None),
                MapTarget::Label(t) => match target_taxonomy.find_label(t) {
                    Some(id) => targets[inst.label] = Some(Some(id)),
                    None => {
                        unknown_targets.insert(t.clone());
                    }
                },
            },
        }
    }
    if !missing.is_empty() {
        return Err(Error::UnknownLabels(missing.into_iter().collect()));
    }
    if !unknown_targets.is_empty() {
        return Err(Error::InvalidTaxonomy(format!(
            "map targets not in taxonomy {}: {}",
            target_taxonomy.framework_name,
            unknown_targets.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let mut out = Vec::new();
    let mut dropped = 0;
    for inst in instances {
        match targets[inst.label].expect("resolved above") {
            Some(label) => out.push(RelationInstance {
                label,
                source: InstanceSource::Relabeled,
                ..inst.clone()
            }),
            None => dropped += 1,
        }
    }
    log::info!("relabeled {} instance(s), dropped {dropped}", out.len());
    Ok(RelabelResult {
        relabeled: out.len(),
        instances: out,
        dropped,
    })
}

/// Appends relabeled data to the training split only. Fails if any relabeled
/// document also appears in dev or test.
pub fn merge_for_extrinsic(splits: &DatasetSplits, relabeled: &[RelationInstance]) -> Result<DatasetSplits> {
    let held_out: HashSet<&str> = splits.dev.iter().chain(&splits.test).map(|i| i.doc_id.as_str()).collect();
    let clashes: BTreeSet<String> = relabeled
        .iter()
        .filter(|i| held_out.contains(i.doc_id.as_str()))
        .map(|i| i.doc_id.clone())
        .collect();
    if !clashes.is_empty() {
        return Err(Error::Contamination(clashes.into_iter().collect()));
    }
    let mut merged = splits.clone();
    merged.train.extend(relabeled.iter().cloned());
    Ok(merged)
}

/// Arithmetic mean of member distributions.
pub fn average_distributions(dists: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = dists.first().ok_or_else(|| Error::Empty("no ensemble members".into()))?;
    let k = first.len();
    if dists.iter().any(|d| d.len() != k) {
        return Err(Error::DimensionMismatch("member distributions differ in length".into()));
    }
    let n = dists.len() as f64;
    Ok((0..k).map(|j| dists.iter().map(|d| d[j]).sum::<f64>() / n).collect())
}

/// Averaged distribution and predicted label for every instance.
pub fn ensemble_predict(
    members: &[&TrainedArtifact],
    instances: &[RelationInstance],
) -> Result<Vec<(Vec<f64>, usize)>> {
    let first = members.first().ok_or_else(|| Error::Empty("no ensemble members".into()))?;
    if let Some(m) = members.iter().find(|m| m.taxonomy.names() != first.taxonomy.names()) {
        return Err(Error::InvalidTaxonomy(format!(
            "ensemble member taxonomy {} differs from {}",
            m.taxonomy.framework_name, first.taxonomy.framework_name
        )));
    }
    let member_dists = members
        .iter()
        .map(|m| {
            let reprs = m.model.represent(instances)?;
            reprs
                .rows()
                .into_iter()
                .map(|r| m.model.distribution_repr(r))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    (0..instances.len())
        .map(|i| {
            let avg = average_distributions(&member_dists.iter().map(|d| d[i].clone()).collect::<Vec<_>>())?;
            let label = argmax(&avg);
            Ok((avg, label))
        })
        .collect()
}

/// The three ensemble members: a supervised-contrastive model, a
/// label-embedding model with randomly initialised labels, and a
/// cross-entropy classifier.
pub fn train_ensemble(
    config: &ExperimentConfig,
    splits: &DatasetSplits,
    taxonomy: &RelationTaxonomy,
    seed: u64,
) -> Result<Vec<TrainedArtifact>> {
    let contrastive = RunSpec {
        toggles: LossToggles {
            icl: true,
            lcl: true,
            lec: false,
            ice: false,
        },
        ..RunSpec::from_config(config)
    };
    let random_labels = RunSpec {
        label_encoder_kind: LabelEncoderKind::Random,
        ..RunSpec::labelemb_baseline(config)
    };
    let specs = [contrastive, random_labels, RunSpec::classifier_baseline(config)];
    specs
        .iter()
        .map(|spec| train_with_spec(config, *spec, splits, taxonomy, seed))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicScore {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub n: usize,
}

/// Ensemble accuracy and macro-F1 on the given instances.
pub fn evaluate_ensemble(members: &[&TrainedArtifact], instances: &[RelationInstance]) -> Result<ExtrinsicScore> {
    let preds: Vec<usize> = ensemble_predict(members, instances)?.into_iter().map(|(_, l)| l).collect();
    let golds: Vec<usize> = instances.iter().map(|i| i.label).collect();
    let k = members.first().map_or(0, |m| m.taxonomy.k());
    let (accuracy, macro_f1) = classification_metrics(&preds, &golds, k)?;
    Ok(ExtrinsicScore {
        accuracy,
        macro_f1,
        n: instances.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_filters_and_orders() {
        assert_eq!(rank_row(&[0.40, 0.17, 0.05], 0.10, 2), vec![(0, 0.40), (1, 0.17)]);
        assert!(rank_row(&[0.05, -0.2], 0.10, 2).is_empty());
        assert_eq!(rank_row(&[0.2, 0.3, 0.01], 0.10, 5), vec![(1, 0.3), (0, 0.2)]);
        assert_eq!(rank_row(&[0.2, 0.2], 0.1, 1), vec![(0, 0.2)]);
    }

    #[test]
    fn strength_parsing() {
        let avg = parse_strength("61,84,88").unwrap().unwrap();
        assert!((avg - (0.61 + 0.84 + 0.88) / 3.0).abs() < 1e-12);
        assert!((avg - 0.78).abs() < 0.005);
        assert_eq!(parse_strength("0.25").unwrap(), Some(0.25));
        assert_eq!(parse_strength("").unwrap(), None);
        assert!(parse_strength("x").is_err());
    }

    #[test]
    fn shipped_maps() {
        let m = RelabelingMap::default_pdtb_rst();
        assert_eq!(m.provenance, MapProvenance::ThisMethod);
        assert_eq!(m.entries.len(), 12);
        assert_eq!(m.get("Comparison.Concession").unwrap().target, MapTarget::Label("contrast".into()));
        assert_eq!(m.get("substitution").unwrap().target, MapTarget::Exclude);
        let ext = RelabelingMap::external_pdtb_rst();
        assert_eq!(ext.provenance, MapProvenance::ExternalTable);
        assert_eq!(ext.get("manner").unwrap().target, MapTarget::Exclude);
        assert!((ext.get("concession").unwrap().strength.unwrap() - 0.78).abs() < 0.005);
        let reparsed = RelabelingMap::parse(&m.to_text(), Path::new("x"), MapProvenance::ExternalTable).unwrap();
        assert_eq!(reparsed.provenance, MapProvenance::ThisMethod);
        assert_eq!(diff_maps(&m, &reparsed), vec![]);
    }

    #[test]
    fn averaging() {
        let avg = average_distributions(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!((avg[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(argmax(&avg), 0);
    }
}
