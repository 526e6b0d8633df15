//! Stage execution: ingest, train, evaluate, map, relabel, extrinsic and
//! report, each writing into its own directory under the run directory.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use discalign::alignment::{
    cross_similarity, diff_maps, evaluate_ensemble, mapping_report, merge_for_extrinsic, relabel_dataset,
    train_ensemble, CrossFrameworkMatrix, ExtrinsicScore, MapEntry, MapTarget, RelabelingMap,
};
use discalign::artifact::{load_artifact, save_artifact, TrainedArtifact};
use discalign::dataset::{load_jsonl_dataset, load_split_dir, load_taxonomy, save_jsonl_dataset, save_split_dir, TAXONOMY_FILE};
use discalign::evaluation::{class_proxies, evaluate_model};
use discalign::ingest::{
    backtranslate_augment, build_pdtb_splits, build_rst_splits, load_dis_dir, load_pdtb_records, relabel_synthetic,
    synthetic_splits, AugmentOptions, HttpTranslator, RecordedTranslator, RelationNameMap, TranslationClient,
};
use discalign::model::ModelKind;
use discalign::training::{best_leq_artifact, run_multi_seed, AggregateReport, MeanStd, RunSpec, SeedOutcome};
use discalign::types::label_counts;
use discalign::{DatasetSplits, LossToggles, RelationInstance, RelationTaxonomy, SplitName};
use serde::{Deserialize, Serialize};

use crate::config::{Baseline, DataSource, FrameworkConfig, LoadedConfig, PipelineConfig};
use crate::error::{CliError, Result};
use crate::files::{matrix_tsv, read_json, write_json, write_text};
use crate::manifest::{digest_external, digest_relative, list_files, now, RunManifest, MANIFEST_FILE, TOOL_VERSION};
use crate::report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Train,
    Evaluate,
    Map,
    Relabel,
    Extrinsic,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Train,
        Stage::Evaluate,
        Stage::Map,
        Stage::Relabel,
        Stage::Extrinsic,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Map => "map",
            Stage::Relabel => "relabel",
            Stage::Extrinsic => "extrinsic",
            Stage::Report => "report",
        }
    }

    /// Stages whose outputs this one reads.
    fn required(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Train => &[Stage::Ingest],
            Stage::Evaluate => &[Stage::Ingest, Stage::Train],
            Stage::Map => &[Stage::Train],
            Stage::Relabel => &[Stage::Ingest, Stage::Map],
            Stage::Extrinsic => &[Stage::Ingest, Stage::Relabel],
            Stage::Report => &[Stage::Ingest, Stage::Train, Stage::Evaluate],
        }
    }

    /// Upstream stages read when present.
    fn optional(self) -> &'static [Stage] {
        match self {
            Stage::Report => &[Stage::Map, Stage::Relabel, Stage::Extrinsic],
            _ => &[],
        }
    }

    /// Whether the stage applies to this config at all.
    fn configured(self, cfg: &PipelineConfig) -> bool {
        match self {
            Stage::Map | Stage::Relabel => cfg.align.is_some(),
            Stage::Extrinsic => cfg.extrinsic.is_some(),
            _ => true,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantGroup {
    Main,
    Encoder,
    Ablation,
    Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub id: String,
    pub group: VariantGroup,
    pub spec: RunSpec,
}

/// Training runs implied by the config: the configured model, extra label
/// encoders, loss ablations and baselines. Ids are unique.
pub fn variants(cfg: &PipelineConfig) -> Vec<Variant> {
    let exp = &cfg.experiment;
    let main = RunSpec::from_config(exp);
    let mut out = vec![Variant {
        id: "main".into(),
        group: VariantGroup::Main,
        spec: main,
    }];
    for &kind in &cfg.train.label_encoders {
        out.push(Variant {
            id: format!("encoder-{kind}"),
            group: VariantGroup::Encoder,
            spec: RunSpec {
                label_encoder_kind: kind,
                ..main
            },
        });
    }
    for abl in &cfg.train.ablations {
        let toggles: LossToggles = abl.parse().expect("validated with the config");
        let spec = if toggles.uses_label_table() {
            RunSpec {
                kind: ModelKind::LabelEmbedding,
                toggles,
                learning_rate: exp.learning_rate,
                label_encoder_kind: exp.label_encoder_kind,
            }
        } else {
            RunSpec::classifier_baseline(exp)
        };
        out.push(Variant {
            id: format!("ablation-{}", toggles.to_string().replace(',', "+")),
            group: VariantGroup::Ablation,
            spec,
        });
    }
    for b in &cfg.train.baselines {
        let (id, spec) = match b {
            Baseline::Classifier => ("baseline-classifier", RunSpec::classifier_baseline(exp)),
            Baseline::Labelemb => ("baseline-labelemb", RunSpec::labelemb_baseline(exp)),
        };
        out.push(Variant {
            id: id.into(),
            group: VariantGroup::Baseline,
            spec,
        });
    }
    let mut seen = HashSet::new();
    out.retain(|v| seen.insert(v.id.clone()));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub attempted: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub framework: String,
    pub classes: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub augmentation: Option<AugmentSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub framework: String,
    pub variant: String,
    pub group: VariantGroup,
    pub model_kind: ModelKind,
    pub toggles: LossToggles,
    pub label_encoder: String,
    pub report: AggregateReport,
}

impl VariantSummary {
    pub fn ok_seeds(&self) -> Vec<u64> {
        self.report.runs.iter().filter(|r| r.metrics.is_some()).map(|r| r.seed).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSelection {
    pub source: String,
    pub target: String,
    pub source_seed: u64,
    pub target_seed: u64,
    pub threshold: f64,
    pub top_n: usize,
    pub hand_edited_map: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelSummary {
    pub source: String,
    pub target: String,
    pub relabeled: usize,
    pub dropped: usize,
    pub per_label: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicRun {
    pub seed: u64,
    pub target_only: ExtrinsicScore,
    pub with_relabeled: ExtrinsicScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicSummary {
    pub target: String,
    pub relabeled_used: usize,
    pub dropped_overlapping: usize,
    pub runs: Vec<ExtrinsicRun>,
    pub target_only_accuracy: Option<MeanStd>,
    pub target_only_macro_f1: Option<MeanStd>,
    pub with_relabeled_accuracy: Option<MeanStd>,
    pub with_relabeled_macro_f1: Option<MeanStd>,
}

pub fn seed_dir(stage_dir: &Path, framework: &str, variant: &str, seed: u64) -> PathBuf {
    stage_dir.join(framework).join(variant).join(format!("seed-{seed}"))
}

pub fn similarity_file(from: &str, to: &str) -> String {
    format!("similarity_{from}_to_{to}.tsv")
}

pub fn mapping_file(from: &str, to: &str) -> String {
    format!("mapping_{from}_to_{to}.json")
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const FINAL_MAP_FILE: &str = "final_map.tsv";
pub const RELABELED_FILE: &str = "relabeled.jsonl";

pub struct Pipeline {
    pub config: LoadedConfig,
    pub out: PathBuf,
    /// Rerun stages even when their manifests match.
    pub force: bool,
}

impl Pipeline {
    pub fn new(config: LoadedConfig, out: impl Into<PathBuf>) -> Self {
        Pipeline {
            config,
            out: out.into(),
            force: false,
        }
    }

    fn cfg(&self) -> &PipelineConfig {
        &self.config.config
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.name())
    }

    /// Stages in dependency order. `None` selects every configured stage.
    pub fn plan(&self, requested: Option<&[Stage]>) -> Result<Vec<Stage>> {
        let mut stages: Vec<Stage> = match requested {
            None => Stage::ALL.into_iter().filter(|s| s.configured(self.cfg())).collect(),
            Some(list) => {
                if let Some(s) = list.iter().find(|s| !s.configured(self.cfg())) {
                    let section = if *s == Stage::Extrinsic { "[extrinsic]" } else { "[align]" };
                    return Err(CliError::Invalid(format!(
                        "stage `{s}` needs an {section} section in {}",
                        self.config.path.display()
                    )));
                }
                list.to_vec()
            }
        };
        stages.sort();
        stages.dedup();
        Ok(stages)
    }

    pub fn run(&self, requested: Option<&[Stage]>) -> Result<Vec<(Stage, StageStatus)>> {
        self.plan(requested)?
            .into_iter()
            .map(|s| self.run_stage(s).map(|st| (s, st)))
            .collect()
    }

    fn upstream_manifest(&self, stage: Stage, upstream: Stage) -> Result<Option<RunManifest>> {
        let path = self.stage_dir(upstream).join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let m = RunManifest::load(&path)?;
        if m.config_hash != self.config.hash {
            return Err(CliError::Invalid(format!(
                "stage `{stage}` would read `{upstream}` output produced by config {}, but the current config is {}; rerun `{upstream}`",
                m.config_hash, self.config.hash
            )));
        }
        Ok(Some(m))
    }

    fn stage_inputs(&self, stage: Stage) -> Result<Vec<crate::manifest::FileDigest>> {
        let mut inputs = Vec::new();
        for &up in stage.required() {
            match self.upstream_manifest(stage, up)? {
                Some(m) => inputs.extend(m.outputs),
                None => {
                    return Err(CliError::MissingStage {
                        stage: stage.name().into(),
                        missing: up.name().into(),
                        path: self.stage_dir(up).join(MANIFEST_FILE),
                    })
                }
            }
        }
        for &up in stage.optional() {
            if up.configured(self.cfg()) {
                if let Some(m) = self.upstream_manifest(stage, up)? {
                    inputs.extend(m.outputs);
                }
            }
        }
        if stage == Stage::Ingest {
            for fw in &self.cfg().frameworks {
                for p in external_inputs(fw) {
                    inputs.extend(digest_external(&p)?);
                }
            }
        }
        if stage == Stage::Map {
            if let Some(p) = self.cfg().align.as_ref().and_then(|a| a.map_file.as_ref()) {
                inputs.extend(digest_external(p)?);
            }
        }
        Ok(inputs)
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageStatus> {
        let inputs = self.stage_inputs(stage)?;
        let dir = self.stage_dir(stage);
        let manifest_path = dir.join(MANIFEST_FILE);
        let seeds = if stage == Stage::Extrinsic {
            self.cfg().extrinsic_seeds()
        } else {
            self.cfg().experiment.seeds.clone()
        };
        let mut manifest = RunManifest {
            command: stage.name().into(),
            config_hash: self.config.hash.clone(),
            tool_version: TOOL_VERSION.into(),
            seeds,
            inputs,
            outputs: Vec::new(),
            started_at: now(),
            finished_at: 0,
        };
        if !self.force && manifest_path.exists() {
            if let Ok(prev) = RunManifest::load(&manifest_path) {
                if prev.same_inputs(&manifest) && prev.outputs_intact(&self.out) {
                    log::info!("{stage}: up to date, skipped");
                    return Ok(StageStatus::Skipped);
                }
            }
        }
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        log::info!("{stage}: running");
        match stage {
            Stage::Ingest => self.ingest(&dir)?,
            Stage::Train => self.train(&dir)?,
            Stage::Evaluate => self.evaluate(&dir)?,
            Stage::Map => self.map(&dir)?,
            Stage::Relabel => self.relabel(&dir)?,
            Stage::Extrinsic => self.extrinsic(&dir)?,
            Stage::Report => report::emit_report(self, &dir)?,
        }
        let files: Vec<PathBuf> = list_files(&dir)?
            .into_iter()
            .filter(|f| f != Path::new(MANIFEST_FILE))
            .map(|f| Path::new(stage.name()).join(f))
            .collect();
        manifest.outputs = digest_relative(&self.out, &files)?;
        manifest.finished_at = now();
        manifest.save(&manifest_path)?;
        Ok(StageStatus::Ran)
    }

    fn ingest(&self, dir: &Path) -> Result<()> {
        let mut summary = Vec::new();
        for fw in &self.cfg().frameworks {
            let (mut splits, taxonomy) = load_framework(fw)?;
            let mut augmentation = None;
            if let Some(aug) = &fw.augment {
                let mut skip = HashSet::new();
                let mut unknown = Vec::new();
                for name in &aug.skip_labels {
                    match taxonomy.find_label(name) {
                        Some(id) => {
                            skip.insert(id);
                        }
                        None => unknown.push(name.clone()),
                    }
                }
                if !unknown.is_empty() {
                    return Err(discalign::Error::UnknownLabels(unknown).into());
                }
                let client: Box<dyn TranslationClient> = match (&aug.translations, &aug.endpoint) {
                    (Some(path), _) => Box::new(RecordedTranslator::load(path)?),
                    (None, Some(endpoint)) => Box::new(HttpTranslator {
                        endpoint: endpoint.clone(),
                        api_key: std::env::var("DISCALIGN_TRANSLATE_KEY").ok(),
                    }),
                    (None, None) => unreachable!("validated with the config"),
                };
                let opts = AugmentOptions {
                    pivot_lang: aug.pivot.clone(),
                    ..AugmentOptions::default()
                };
                let res = backtranslate_augment(std::mem::take(&mut splits.train), &skip, client.as_ref(), &opts)?;
                splits.train = res.instances;
                augmentation = Some(AugmentSummary {
                    attempted: res.attempted,
                    failed: res.failed,
                });
            }
            save_split_dir(dir.join(&fw.name), &splits, &taxonomy)?;
            log::info!(
                "{}: {} classes, {}/{}/{} train/dev/test instances",
                fw.name,
                taxonomy.k(),
                splits.train.len(),
                splits.dev.len(),
                splits.test.len()
            );
            summary.push(IngestSummary {
                framework: fw.name.clone(),
                classes: taxonomy.k(),
                train: splits.train.len(),
                dev: splits.dev.len(),
                test: splits.test.len(),
                augmentation,
            });
        }
        write_json(&dir.join(SUMMARY_FILE), &summary)
    }

    fn load_splits(&self, framework: &str) -> Result<(DatasetSplits, RelationTaxonomy)> {
        Ok(load_split_dir(self.stage_dir(Stage::Ingest).join(framework))?)
    }

    fn train(&self, dir: &Path) -> Result<()> {
        let exp = &self.cfg().experiment;
        let mut summary = Vec::new();
        for fw in &self.cfg().frameworks {
            let (splits, taxonomy) = self.load_splits(&fw.name)?;
            for v in variants(self.cfg()) {
                log::info!("{}: training {} over {} seed(s)", fw.name, v.id, exp.seeds.len());
                let run = run_multi_seed(exp, v.spec, &splits, &taxonomy)?;
                for a in &run.artifacts {
                    save_artifact(seed_dir(dir, &fw.name, &v.id, a.seed), a)?;
                }
                summary.push(VariantSummary {
                    framework: fw.name.clone(),
                    variant: v.id.clone(),
                    group: v.group,
                    model_kind: v.spec.kind,
                    toggles: v.spec.toggles,
                    label_encoder: v.spec.label_encoder_kind.to_string(),
                    report: run.report,
                });
            }
        }
        write_json(&dir.join(SUMMARY_FILE), &summary)
    }

    pub fn train_summary(&self) -> Result<Vec<VariantSummary>> {
        read_json(&self.stage_dir(Stage::Train).join(SUMMARY_FILE))
    }

    fn load_seed_artifacts(&self, framework: &str, variant: &str) -> Result<Vec<TrainedArtifact>> {
        let summary = self.train_summary()?;
        let entry = summary
            .iter()
            .find(|s| s.framework == framework && s.variant == variant)
            .ok_or_else(|| CliError::Invalid(format!("no trained `{variant}` models for framework {framework}")))?;
        let train_dir = self.stage_dir(Stage::Train);
        entry
            .ok_seeds()
            .into_iter()
            .map(|seed| Ok(load_artifact(seed_dir(&train_dir, framework, variant, seed))?))
            .collect()
    }

    fn evaluate(&self, dir: &Path) -> Result<()> {
        let train_dir = self.stage_dir(Stage::Train);
        let mut out = Vec::new();
        for entry in self.train_summary()? {
            let (splits, taxonomy) = self.load_splits(&entry.framework)?;
            let names = taxonomy.names();
            let mut runs = Vec::new();
            for run in &entry.report.runs {
                let Some(trained) = &run.metrics else {
                    runs.push(run.clone());
                    continue;
                };
                let a = load_artifact(seed_dir(&train_dir, &entry.framework, &entry.variant, run.seed))?;
                let proxy_split = a.config.proxy_split;
                let (metrics, corr) = evaluate_model(&a.model, &splits, SplitName::Test, proxy_split)?;
                let proxy_instances = splits.get(proxy_split);
                let proxies = class_proxies(proxy_instances, a.model.represent(proxy_instances)?.view(), taxonomy.k(), proxy_split)?;
                let sd = seed_dir(dir, &entry.framework, &entry.variant, run.seed);
                write_json(&sd.join("metrics.json"), &metrics)?;
                write_text(&sd.join("correlation_raw.tsv"), &matrix_tsv(&names, &names, &corr.raw))?;
                write_text(&sd.join("correlation_normalized.tsv"), &matrix_tsv(&names, &names, &corr.normalized))?;
                write_json(&sd.join("row_status.json"), &corr.row_status)?;
                write_text(&sd.join("proxies.tsv"), &matrix_tsv(&names, &axis_names(proxies.matrix.ncols()), &proxies.matrix))?;
                runs.push(SeedOutcome {
                    seed: run.seed,
                    metrics: Some(discalign::artifact::MetricsReport {
                        eval: metrics,
                        ..trained.clone()
                    }),
                    error: None,
                });
            }
            out.push(VariantSummary {
                report: AggregateReport::from_outcomes(runs),
                ..entry
            });
        }
        write_json(&dir.join(SUMMARY_FILE), &out)
    }

    pub fn eval_summary(&self) -> Result<Vec<VariantSummary>> {
        read_json(&self.stage_dir(Stage::Evaluate).join(SUMMARY_FILE))
    }

    /// Highest-LEQ `main` model of a framework.
    fn best_main(&self, framework: &str) -> Result<TrainedArtifact> {
        let artifacts = self.load_seed_artifacts(framework, "main")?;
        best_leq_artifact(&artifacts)
            .cloned()
            .ok_or_else(|| CliError::Invalid(format!("every `main` seed failed for framework {framework}")))
    }

    fn map(&self, dir: &Path) -> Result<()> {
        let align = self.cfg().align.as_ref().expect("planned only with [align]");
        let src = self.best_main(&align.source)?;
        let tgt = self.best_main(&align.target)?;
        let forward = cross_similarity(&src.label_table, &tgt.label_table)?;
        let backward = forward.transposed();
        for (m, from, to) in [(&forward, &align.source, &align.target), (&backward, &align.target, &align.source)] {
            write_text(&dir.join(similarity_file(from, to)), &matrix_tsv(&m.source.names(), &m.target.names(), &m.values))?;
            let report = mapping_report(m, align.threshold, align.top_n, &align.exclude)?;
            write_json(&dir.join(mapping_file(from, to)), &report)?;
        }
        let report = mapping_report(&forward, align.threshold, align.top_n, &align.exclude)?;
        let auto = auto_map(&report, &forward);
        auto.save(&dir.join("auto_map.tsv"))?;
        let final_map = match &align.map_file {
            Some(path) => RelabelingMap::load(path)?,
            None => auto.clone(),
        };
        final_map.save(&dir.join(FINAL_MAP_FILE))?;
        let mut diff = String::from("source\tauto\tfinal\n");
        for d in diff_maps(&auto, &final_map) {
            diff.push_str(&format!("{}\t{}\t{}\n", d.source, target_text(d.auto.as_ref()), target_text(d.final_target.as_ref())));
        }
        write_text(&dir.join("map_diff.tsv"), &diff)?;
        write_json(
            &dir.join("selection.json"),
            &MapSelection {
                source: align.source.clone(),
                target: align.target.clone(),
                source_seed: src.seed,
                target_seed: tgt.seed,
                threshold: align.threshold,
                top_n: align.top_n,
                hand_edited_map: align.map_file.is_some(),
            },
        )
    }

    fn relabel(&self, dir: &Path) -> Result<()> {
        let align = self.cfg().align.as_ref().expect("planned only with [align]");
        let map = RelabelingMap::load(&self.stage_dir(Stage::Map).join(FINAL_MAP_FILE))?;
        let (splits, source_tax) = self.load_splits(&align.source)?;
        let target_tax = load_taxonomy(self.stage_dir(Stage::Ingest).join(&align.target).join(TAXONOMY_FILE))?;
        let all: Vec<RelationInstance> = splits.train.into_iter().chain(splits.dev).chain(splits.test).collect();
        let res = relabel_dataset(&all, &source_tax, &map, &target_tax)?;
        save_jsonl_dataset(dir.join(RELABELED_FILE), &res.instances, &target_tax)?;
        let per_label = label_counts(&res.instances)
            .into_iter()
            .map(|(l, n)| (target_tax.name(l).to_string(), n))
            .collect();
        write_json(
            &dir.join(SUMMARY_FILE),
            &RelabelSummary {
                source: align.source.clone(),
                target: align.target.clone(),
                relabeled: res.relabeled,
                dropped: res.dropped,
                per_label,
            },
        )
    }

    fn extrinsic(&self, dir: &Path) -> Result<()> {
        let align = self.cfg().align.as_ref().expect("validated with the config");
        let ext = self.cfg().extrinsic.as_ref().expect("planned only with [extrinsic]");
        let exp = &self.cfg().experiment;
        let (splits, taxonomy) = self.load_splits(&align.target)?;
        let mut relabeled = load_jsonl_dataset(self.stage_dir(Stage::Relabel).join(RELABELED_FILE), &taxonomy)?;
        let before = relabeled.len();
        if ext.drop_overlapping_documents {
            let held_out: HashSet<&str> = splits.dev.iter().chain(&splits.test).map(|i| i.doc_id.as_str()).collect();
            relabeled.retain(|i| !held_out.contains(i.doc_id.as_str()));
        }
        let dropped_overlapping = before - relabeled.len();
        if dropped_overlapping > 0 {
            log::warn!("dropped {dropped_overlapping} relabeled instance(s) from documents held out in {}", align.target);
        }
        let merged = merge_for_extrinsic(&splits, &relabeled)?;
        let mut runs = Vec::new();
        for seed in self.cfg().extrinsic_seeds() {
            log::info!("extrinsic: seed {seed}");
            let score = |data: &DatasetSplits| -> Result<ExtrinsicScore> {
                let members = train_ensemble(exp, data, &taxonomy, seed)?;
                Ok(evaluate_ensemble(&members.iter().collect::<Vec<_>>(), &splits.test)?)
            };
            runs.push(ExtrinsicRun {
                seed,
                target_only: score(&splits)?,
                with_relabeled: score(&merged)?,
            });
        }
        let col = |f: fn(&ExtrinsicRun) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
        let summary = ExtrinsicSummary {
            target: align.target.clone(),
            relabeled_used: relabeled.len(),
            dropped_overlapping,
            target_only_accuracy: col(|r| r.target_only.accuracy),
            target_only_macro_f1: col(|r| r.target_only.macro_f1),
            with_relabeled_accuracy: col(|r| r.with_relabeled.accuracy),
            with_relabeled_macro_f1: col(|r| r.with_relabeled.macro_f1),
            runs,
        };
        write_json(&dir.join(SUMMARY_FILE), &summary)
    }
}

pub fn axis_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("d{i}")).collect()
}

fn target_text(t: Option<&MapTarget>) -> String {
    match t {
        None => "—".into(),
        Some(MapTarget::Exclude) => "EXCLUDE".into(),
        Some(MapTarget::Label(l)) => l.clone(),
    }
}

/// Top-1 map from the report, with report-excluded source labels mapped to
/// EXCLUDE so that relabeling drops them instead of failing.
pub fn auto_map(report: &discalign::alignment::MappingReport, matrix: &CrossFrameworkMatrix) -> RelabelingMap {
    let mut map = RelabelingMap::from_report(report);
    for name in &report.excluded {
        if matrix.source.index_of(name).is_some() {
            map.entries.push(MapEntry {
                source: name.rsplit('.').next().unwrap_or(name).to_lowercase(),
                target: MapTarget::Exclude,
                strength: None,
                note: "excluded from the mapping report".into(),
            });
        }
    }
    map
}

fn external_inputs(fw: &FrameworkConfig) -> Vec<PathBuf> {
    let mut out = Vec::new();
    match &fw.data {
        DataSource::Synthetic { .. } => {}
        DataSource::Rst {
            train_dir,
            test_dir,
            name_map,
            ..
        } => {
            out.push(train_dir.clone());
            out.push(test_dir.clone());
            out.extend(name_map.clone());
        }
        DataSource::Pdtb { relations, .. } => out.push(relations.clone()),
    }
    out.extend(fw.augment.as_ref().and_then(|a| a.translations.clone()));
    out
}

/// Builds the splits of one framework from its raw source.
pub fn load_framework(fw: &FrameworkConfig) -> Result<(DatasetSplits, RelationTaxonomy)> {
    let (splits, taxonomy) = match &fw.data {
        DataSource::Synthetic {
            classes,
            per_class,
            seed,
            names,
            permutation,
        } => {
            let (splits, taxonomy) = synthetic_splits(*classes, (per_class[0], per_class[1], per_class[2]), *seed)?;
            match (names, permutation) {
                (None, None) => (splits, taxonomy),
                (names, permutation) => {
                    let names: Vec<String> = names.clone().unwrap_or_else(|| taxonomy.names().iter().map(|s| s.to_string()).collect());
                    let perm: Vec<usize> = permutation.clone().unwrap_or_else(|| (0..taxonomy.k()).collect());
                    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                    relabel_synthetic(&splits, &taxonomy, &fw.name, &refs, &perm)?
                }
            }
        }
        DataSource::Rst {
            train_dir,
            test_dir,
            name_map,
            dev_fraction,
            split_seed,
        } => {
            let map = match name_map {
                Some(p) => RelationNameMap::load(p)?,
                None => RelationNameMap::default_rst(),
            };
            let train = load_dis_dir(train_dir)?;
            let test = load_dis_dir(test_dir)?;
            build_rst_splits(&train, &test, &map, *dev_fraction, *split_seed)?
        }
        DataSource::Pdtb {
            relations,
            min_count,
            kinds,
        } => build_pdtb_splits(&load_pdtb_records(relations)?, kinds.filter(), *min_count)?,
    };
    Ok((splits, taxonomy.with_framework_name(fw.name.clone())))
}
