//! Markdown report with the experiment tables, plus heatmaps and projections.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use discalign::alignment::MappingReport;
use discalign::artifact::read_label_table_tsv;
use discalign::dataset::{load_taxonomy, TAXONOMY_FILE};
use discalign::evaluation::RowStatus;
use discalign::training::MeanStd;
use discalign::SplitName;
use ndarray::concatenate;
use ndarray::Axis;

use crate::config::{DataSource, RelationKinds};
use crate::error::{CliError, Result};
use crate::files::{parse_matrix_tsv, read_json, write_text};
use crate::manifest::MANIFEST_FILE;
use crate::pipeline::{
    mapping_file, seed_dir, similarity_file, ExtrinsicSummary, IngestSummary, MapSelection, Pipeline, RelabelSummary,
    Stage, VariantGroup, VariantSummary, SUMMARY_FILE,
};
use crate::plot::{heatmap_svg, pca_2d, scatter_svg, PointSet};

pub const MISSING: &str = "—";

/// `mean(± std)` of a fraction, printed as a percentage with two decimals.
pub fn mean_std_cell(m: Option<MeanStd>) -> String {
    match m {
        Some(m) if m.mean.is_finite() && m.std.is_finite() => format!("{:.2}(± {:.2})", 100.0 * m.mean, 100.0 * m.std),
        _ => MISSING.into(),
    }
}

#[derive(Debug, Clone)]
pub struct MappingData {
    pub selection: MapSelection,
    pub forward: MappingReport,
    pub backward: MappingReport,
    /// Source, generated target, final target.
    pub overrides: Vec<(String, String, String)>,
}

#[derive(Debug, Clone)]
pub struct ReportData {
    pub config_hash: String,
    pub config_name: String,
    pub seeds: Vec<u64>,
    pub proxy_split: SplitName,
    pub ingest: Vec<IngestSummary>,
    /// Framework name and a short description of its data.
    pub frameworks: Vec<(String, String)>,
    pub variants: Vec<VariantSummary>,
    pub mapping: Option<MappingData>,
    pub relabel: Option<RelabelSummary>,
    pub extrinsic: Option<ExtrinsicSummary>,
    pub figures: Vec<String>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn render(&self, out: &mut String, hash: &str) {
        writeln!(out, "Config `{hash}`.\n").unwrap();
        writeln!(out, "| {} |", self.header.join(" | ")).unwrap();
        writeln!(out, "|{}", "---|".repeat(self.header.len())).unwrap();
        for r in &self.rows {
            let cells: Vec<&str> = (0..self.header.len()).map(|i| r.get(i).map_or(MISSING, |c| c.as_str())).collect();
            writeln!(out, "| {} |", cells.join(" | ")).unwrap();
        }
        out.push('\n');
    }
}

fn variant_name(v: &VariantSummary) -> String {
    match v.group {
        VariantGroup::Main => "joint model".into(),
        VariantGroup::Encoder => format!("joint model, {} labels", v.label_encoder),
        VariantGroup::Ablation => format!("joint model, {}", v.toggles.to_string().replace(',', " + ")),
        VariantGroup::Baseline => match v.model_kind {
            discalign::model::ModelKind::ClassifierBaseline => "classifier baseline".into(),
            _ => "label-embedding baseline".into(),
        },
    }
}

fn metric_cells(v: &VariantSummary) -> Vec<String> {
    vec![
        mean_std_cell(v.report.accuracy),
        mean_std_cell(v.report.macro_f1),
        mean_std_cell(v.report.leq),
    ]
}

fn mapping_table(report: &MappingReport) -> Table {
    let source_col = format!("{} label", report.source_framework);
    let mut header = vec![source_col];
    header.extend((1..=report.top_n).map(|i| format!("{} #{i}", report.target_framework)));
    let mut t = Table {
        header,
        rows: Vec::new(),
    };
    for row in &report.rows {
        let mut cells = vec![row.name.clone()];
        cells.extend(row.entries.iter().map(|e| format!("{} ({:.2})", e.name, e.similarity)));
        t.push(cells);
    }
    t
}

/// Renders the report body. Missing values appear as "—"; mapping and
/// extrinsic sections appear only when those stages ran.
pub fn render_report(d: &ReportData) -> String {
    let h = &d.config_hash;
    let mut out = String::new();
    writeln!(out, "# Experiment report\n").unwrap();
    writeln!(
        out,
        "Config `{h}` ({}). Seeds: {}. Scores are percentages, mean(± std) over seeds.\n",
        d.config_name,
        d.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")
    )
    .unwrap();
    if d.proxy_split == SplitName::Test {
        writeln!(
            out,
            "LEQ class proxies are computed on the test split, so LEQ is an evaluation-on-test figure. Use `proxy_split = \"DEV\"` for model selection.\n"
        )
        .unwrap();
    }

    writeln!(out, "## Data\n").unwrap();
    let mut t = Table::new(&["Framework", "Source", "Classes", "Train", "Dev", "Test", "Augmented copies"]);
    for s in &d.ingest {
        let desc = d.frameworks.iter().find(|(n, _)| *n == s.framework).map_or(MISSING.to_string(), |(_, x)| x.clone());
        let aug = s
            .augmentation
            .as_ref()
            .map_or(MISSING.to_string(), |a| format!("{} ({} failed)", a.attempted - a.failed, a.failed));
        t.push(vec![
            s.framework.clone(),
            desc,
            s.classes.to_string(),
            s.train.to_string(),
            s.dev.to_string(),
            s.test.to_string(),
            aug,
        ]);
    }
    t.render(&mut out, h);

    writeln!(out, "## Models\n").unwrap();
    let mut t = Table::new(&["Framework", "Model", "Acc", "Macro-F1", "LEQ"]);
    for v in d.variants.iter().filter(|v| v.group != VariantGroup::Ablation) {
        let mut row = vec![v.framework.clone(), variant_name(v)];
        row.extend(metric_cells(v));
        t.push(row);
    }
    t.render(&mut out, h);

    if d.variants.iter().any(|v| v.group == VariantGroup::Ablation) {
        writeln!(out, "## Loss ablations\n").unwrap();
        let mut t = Table::new(&["Framework", "Loss terms", "Acc", "Macro-F1", "LEQ"]);
        for v in d.variants.iter().filter(|v| matches!(v.group, VariantGroup::Main | VariantGroup::Ablation)) {
            let mut row = vec![v.framework.clone(), v.toggles.to_string().replace(',', " + ")];
            row.extend(metric_cells(v));
            t.push(row);
        }
        t.render(&mut out, h);
    }

    if d.frameworks.len() > 1 {
        writeln!(out, "## Frameworks\n").unwrap();
        let mut t = Table::new(&["Framework", "Source", "Acc", "Macro-F1", "LEQ"]);
        for (name, desc) in &d.frameworks {
            let mut row = vec![name.clone(), desc.clone()];
            match d.variants.iter().find(|v| v.framework == *name && v.group == VariantGroup::Main) {
                Some(v) => row.extend(metric_cells(v)),
                None => row.extend([MISSING.to_string(), MISSING.to_string(), MISSING.to_string()]),
            }
            t.push(row);
        }
        t.render(&mut out, h);
    }

    if let Some(m) = &d.mapping {
        for r in [&m.forward, &m.backward] {
            writeln!(out, "## Label mapping: {} to {}\n", r.source_framework, r.target_framework).unwrap();
            writeln!(
                out,
                "Top {} targets with cosine similarity above {:.2}, from the highest-LEQ models (seeds {} and {}).\n",
                r.top_n, r.threshold, m.selection.source_seed, m.selection.target_seed
            )
            .unwrap();
            mapping_table(r).render(&mut out, h);
            if !r.excluded.is_empty() {
                writeln!(out, "Excluded: {}.\n", r.excluded.join(", ")).unwrap();
            }
        }
        if !m.overrides.is_empty() {
            writeln!(out, "## Map overrides\n").unwrap();
            let mut t = Table::new(&["Source", "Generated", "Used"]);
            for (s, a, f) in &m.overrides {
                t.push(vec![s.clone(), a.clone(), f.clone()]);
            }
            t.render(&mut out, h);
        }
    }

    if let Some(r) = &d.relabel {
        writeln!(out, "## Relabeling\n").unwrap();
        writeln!(
            out,
            "{} {} instance(s) relabeled into {}; {} dropped by the map.\n",
            r.relabeled, r.source, r.target, r.dropped
        )
        .unwrap();
    }

    if let Some(e) = &d.extrinsic {
        writeln!(out, "## Extrinsic evaluation\n").unwrap();
        writeln!(
            out,
            "Ensemble of three models on the {} test split; {} relabeled instance(s) used, {} dropped for sharing documents with held-out data.\n",
            e.target, e.relabeled_used, e.dropped_overlapping
        )
        .unwrap();
        let mut t = Table::new(&["Training data", "Acc", "Macro-F1"]);
        t.push(vec![
            format!("{} only", e.target),
            mean_std_cell(e.target_only_accuracy),
            mean_std_cell(e.target_only_macro_f1),
        ]);
        t.push(vec![
            format!("{} + relabeled", e.target),
            mean_std_cell(e.with_relabeled_accuracy),
            mean_std_cell(e.with_relabeled_macro_f1),
        ]);
        t.render(&mut out, h);
    }

    let failed: Vec<String> = d
        .variants
        .iter()
        .filter(|v| !v.report.failed_seeds.is_empty())
        .map(|v| format!("{}/{}: seeds {:?}", v.framework, v.variant, v.report.failed_seeds))
        .collect();
    writeln!(out, "## Notes\n").unwrap();
    writeln!(out, "- The classifier baseline has no label embeddings; its LEQ uses the classification head rows.").unwrap();
    if d.mapping.is_some() {
        writeln!(
            out,
            "- Cross-framework similarities assume the two models' label spaces are comparable. They were accepted because both used a pretrained label encoder and the same input-encoder checkpoint."
        )
        .unwrap();
    }
    for f in &failed {
        writeln!(out, "- Failed runs: {f}.").unwrap();
    }
    for v in &d.variants {
        let flagged: Vec<String> = v
            .report
            .runs
            .iter()
            .filter_map(|r| r.metrics.as_ref().map(|m| (r.seed, m)))
            .filter(|(_, m)| !m.eval.degenerate_rows.is_empty() || !m.eval.absent_classes.is_empty())
            .map(|(s, m)| {
                format!(
                    "seed {s}: {} degenerate, {} absent",
                    m.eval.degenerate_rows.len(),
                    m.eval.absent_classes.len()
                )
            })
            .collect();
        if !flagged.is_empty() {
            writeln!(out, "- {}/{} rows left out of LEQ ({}).", v.framework, v.variant, flagged.join("; ")).unwrap();
        }
    }
    if !d.figures.is_empty() {
        writeln!(out, "\n## Figures\n").unwrap();
        for f in &d.figures {
            writeln!(out, "- [{f}]({f})").unwrap();
        }
    }
    out
}

fn describe(data: &DataSource) -> String {
    match data {
        DataSource::Synthetic { .. } => "synthetic".into(),
        DataSource::Rst { .. } => "RST".into(),
        DataSource::Pdtb { kinds, .. } => match kinds {
            RelationKinds::Total => "PDTB, explicit + implicit".into(),
            RelationKinds::Explicit => "PDTB, explicit".into(),
            RelationKinds::Implicit => "PDTB, implicit".into(),
        },
    }
}

fn stage_present(p: &Pipeline, stage: Stage) -> bool {
    p.stage_dir(stage).join(MANIFEST_FILE).exists()
}

fn read_overrides(path: &Path) -> Result<Vec<(String, String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(text
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f.len() == 3).then(|| (f[0].to_string(), f[1].to_string(), f[2].to_string()))
        })
        .collect())
}

/// Gathers stage outputs, renders `report.md` and writes the figures.
pub fn emit_report(p: &Pipeline, dir: &Path) -> Result<()> {
    let cfg = &p.config.config;
    let variants = p.eval_summary()?;
    let mut figures = Vec::new();

    let eval_dir = p.stage_dir(Stage::Evaluate);
    let train_dir = p.stage_dir(Stage::Train);
    for v in variants.iter().filter(|v| v.group == VariantGroup::Main) {
        let best = v
            .report
            .runs
            .iter()
            .filter_map(|r| r.metrics.as_ref().map(|m| (r.seed, m.eval.leq)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        let Some((seed, _)) = best else { continue };
        let sd = seed_dir(&eval_dir, &v.framework, &v.variant, seed);
        let path = sd.join("correlation_normalized.tsv");
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let (rows, cols, m) = parse_matrix_tsv(&text, &path)?;
        let status: Vec<RowStatus> = read_json(&sd.join("row_status.json"))?;
        let flagged: Vec<(usize, String)> = status
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match s {
                RowStatus::Ok => None,
                RowStatus::Degenerate => Some((i, "degenerate row, left out of LEQ".into())),
                RowStatus::AbsentClass => Some((i, "class absent from the proxy split, left out of LEQ".into())),
            })
            .collect();
        let name = format!("heatmap_{}.svg", v.framework);
        let title = format!("{}: normalised proxy/label correlation (seed {seed})", v.framework);
        write_text(&dir.join(&name), &heatmap_svg(&title, &rows, &cols, &m, (0.0, 1.0), &flagged))?;
        figures.push(name);

        let ppath = sd.join("proxies.tsv");
        let ptext = fs::read_to_string(&ppath).map_err(|e| CliError::io(&ppath, e))?;
        let (_, _, proxies) = parse_matrix_tsv(&ptext, &ppath)?;
        let tdir = seed_dir(&train_dir, &v.framework, &v.variant, seed);
        let taxonomy = load_taxonomy(p.stage_dir(Stage::Ingest).join(&v.framework).join(TAXONOMY_FILE))?;
        let table = read_label_table_tsv(&tdir.join("label_table.tsv"), &taxonomy)?;
        let present: Vec<usize> = status.iter().enumerate().filter(|(_, s)| **s != RowStatus::AbsentClass).map(|(i, _)| i).collect();
        let proxies = proxies.select(Axis(0), &present);
        let both = concatenate(Axis(0), &[table.view(), proxies.view()]).map_err(|e| CliError::Invalid(e.to_string()))?;
        let xy = pca_2d(&both);
        let k = table.nrows();
        let sets = [
            PointSet {
                name: "label embeddings",
                colour: "#1f4fbf",
                labels: taxonomy.names().iter().map(|s| s.to_string()).collect(),
                xy: xy.slice(ndarray::s![..k, ..]).to_owned(),
            },
            PointSet {
                name: "class proxies",
                colour: "#d0582a",
                labels: present.iter().map(|&i| taxonomy.name(i).to_string()).collect(),
                xy: xy.slice(ndarray::s![k.., ..]).to_owned(),
            },
        ];
        let name = format!("projection_{}.svg", v.framework);
        write_text(&dir.join(&name), &scatter_svg(&format!("{}: 2-D projection (seed {seed})", v.framework), &sets))?;
        figures.push(name);
    }

    let mapping = if cfg.align.is_some() && stage_present(p, Stage::Map) {
        let map_dir = p.stage_dir(Stage::Map);
        let selection: MapSelection = read_json(&map_dir.join("selection.json"))?;
        let (s, t) = (&selection.source, &selection.target);
        let path = map_dir.join(similarity_file(s, t));
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let (rows, cols, m) = parse_matrix_tsv(&text, &path)?;
        let name = format!("similarity_{s}_to_{t}.svg");
        write_text(&dir.join(&name), &heatmap_svg(&format!("Label similarity, {s} to {t}"), &rows, &cols, &m, (-1.0, 1.0), &[]))?;
        figures.push(name);
        Some(MappingData {
            forward: read_json(&map_dir.join(mapping_file(s, t)))?,
            backward: read_json(&map_dir.join(mapping_file(t, s)))?,
            overrides: read_overrides(&map_dir.join("map_diff.tsv"))?,
            selection,
        })
    } else {
        None
    };
    let relabel = match cfg.align.is_some() && stage_present(p, Stage::Relabel) {
        true => Some(read_json(&p.stage_dir(Stage::Relabel).join(SUMMARY_FILE))?),
        false => None,
    };
    let extrinsic = match cfg.extrinsic.is_some() && stage_present(p, Stage::Extrinsic) {
        true => Some(read_json(&p.stage_dir(Stage::Extrinsic).join(SUMMARY_FILE))?),
        false => None,
    };

    let data = ReportData {
        config_hash: p.config.hash.clone(),
        config_name: p
            .config
            .path
            .file_name()
            .map_or_else(|| p.config.path.display().to_string(), |n| n.to_string_lossy().into_owned()),
        seeds: cfg.experiment.seeds.clone(),
        proxy_split: cfg.experiment.proxy_split,
        ingest: read_json(&p.stage_dir(Stage::Ingest).join(SUMMARY_FILE))?,
        frameworks: cfg.frameworks.iter().map(|f| (f.name.clone(), describe(&f.data))).collect(),
        variants,
        mapping,
        relabel,
        extrinsic,
        figures,
    };
    write_text(&dir.join("report.md"), &render_report(&data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use discalign::training::AggregateReport;
    use discalign::LossToggles;

    #[test]
    fn cells_use_percent_mean_and_std() {
        assert_eq!(
            mean_std_cell(Some(MeanStd {
                mean: 0.6934,
                std: 0.0046
            })),
            "69.34(± 0.46)"
        );
        assert_eq!(mean_std_cell(None), MISSING);
        assert_eq!(
            mean_std_cell(Some(MeanStd {
                mean: f64::NAN,
                std: 0.0
            })),
            MISSING
        );
    }

    fn data() -> ReportData {
        ReportData {
            config_hash: "0123456789ab".into(),
            config_name: "exp.toml".into(),
            seeds: vec![1, 2, 3],
            proxy_split: SplitName::Dev,
            ingest: Vec::new(),
            frameworks: vec![("syn".into(), "synthetic".into())],
            variants: vec![VariantSummary {
                framework: "syn".into(),
                variant: "main".into(),
                group: VariantGroup::Main,
                model_kind: discalign::model::ModelKind::LabelEmbedding,
                toggles: LossToggles::ALL,
                label_encoder: "pretrained_b".into(),
                report: AggregateReport::from_outcomes(Vec::new()),
            }],
            mapping: None,
            relabel: None,
            extrinsic: None,
            figures: Vec::new(),
        }
    }

    #[test]
    fn single_framework_omits_mapping_tables() {
        let text = render_report(&data());
        assert!(!text.contains("Label mapping"));
        assert!(!text.contains("## Frameworks"));
        assert!(!text.contains("evaluation-on-test"));
    }

    #[test]
    fn every_table_names_the_config_hash_and_missing_cells_are_dashes() {
        let text = render_report(&data());
        let tables = text.matches("| Framework |").count();
        assert!(tables >= 2);
        assert_eq!(text.matches("Config `0123456789ab`.\n").count(), tables);
        assert!(text.contains("| syn | joint model | — | — | — |"));
    }
}
