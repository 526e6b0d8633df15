//! Line-delimited JSON interchange for relation instances.
//!
//! One record per line with the fields `arg1`, `arg2`, `label` (a label name,
//! resolved against a taxonomy at load time), `framework`, `relation_kind`,
//! `connective`, `doc_id` and `source`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    DatasetSplits, Framework, InstanceSource, RelationInstance, RelationKind, RelationTaxonomy,
};

#[derive(Debug, Serialize, Deserialize)]
struct InstanceRecord {
    arg1: String,
    arg2: String,
    label: String,
    framework: Framework,
    #[serde(default = "default_kind")]
    relation_kind: RelationKind,
    #[serde(default)]
    connective: Option<String>,
    doc_id: String,
    #[serde(default = "default_source")]
    source: InstanceSource,
}

fn default_kind() -> RelationKind {
    RelationKind::Na
}

fn default_source() -> InstanceSource {
    InstanceSource::Original
}

pub fn load_jsonl_dataset(path: impl AsRef<Path>, taxonomy: &RelationTaxonomy) -> Result<Vec<RelationInstance>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut instances = Vec::new();
    let mut unknown: Vec<String> = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let rec: InstanceRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let Some(label) = taxonomy.index_of(&rec.label) else {
            if !unknown.contains(&rec.label) {
                unknown.push(rec.label);
            }
            continue;
        };
        let inst = RelationInstance {
            arg1: rec.arg1,
            arg2: rec.arg2,
            label,
            framework: rec.framework,
            relation_kind: rec.relation_kind,
            connective: rec.connective,
            doc_id: rec.doc_id,
            source: rec.source,
        };
        inst.validate(taxonomy.k()).map_err(|e| parse_err(e.to_string()))?;
        instances.push(inst);
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownLabels(unknown));
    }
    Ok(instances)
}

pub fn save_jsonl_dataset(
    path: impl AsRef<Path>,
    instances: &[RelationInstance],
    taxonomy: &RelationTaxonomy,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for inst in instances {
        inst.validate(taxonomy.k())?;
        let rec = InstanceRecord {
            arg1: inst.arg1.clone(),
            arg2: inst.arg2.clone(),
            label: taxonomy.name(inst.label).to_string(),
            framework: inst.framework,
            relation_kind: inst.relation_kind,
            connective: inst.connective.clone(),
            doc_id: inst.doc_id.clone(),
            source: inst.source,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_taxonomy(path: impl AsRef<Path>) -> Result<RelationTaxonomy> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_taxonomy(path: impl AsRef<Path>, taxonomy: &RelationTaxonomy) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(taxonomy)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub const TAXONOMY_FILE: &str = "taxonomy.json";

/// Writes `taxonomy.json` plus `train.jsonl`, `dev.jsonl` and `test.jsonl`.
pub fn save_split_dir(dir: impl AsRef<Path>, splits: &DatasetSplits, taxonomy: &RelationTaxonomy) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_taxonomy(dir.join(TAXONOMY_FILE), taxonomy)?;
    save_jsonl_dataset(dir.join("train.jsonl"), &splits.train, taxonomy)?;
    save_jsonl_dataset(dir.join("dev.jsonl"), &splits.dev, taxonomy)?;
    save_jsonl_dataset(dir.join("test.jsonl"), &splits.test, taxonomy)
}

/// Reads a directory written by [`save_split_dir`]. Missing split files are
/// treated as empty.
pub fn load_split_dir(dir: impl AsRef<Path>) -> Result<(DatasetSplits, RelationTaxonomy)> {
    let dir = dir.as_ref();
    let taxonomy = load_taxonomy(dir.join(TAXONOMY_FILE))?;
    let load = |name: &str| -> Result<Vec<RelationInstance>> {
        let p = dir.join(name);
        if p.exists() {
            load_jsonl_dataset(&p, &taxonomy)
        } else {
            Ok(Vec::new())
        }
    };
    let splits = DatasetSplits {
        train: load("train.jsonl")?,
        dev: load("dev.jsonl")?,
        test: load("test.jsonl")?,
    };
    Ok((splits, taxonomy))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taxonomy() -> RelationTaxonomy {
        RelationTaxonomy::from_names("rst", &["cause", "contrast"]).unwrap()
    }

    fn write(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn two_valid_lines() {
        let f = write(&[
            r#"{"arg1":"a","arg2":"b","label":"cause","framework":"RST","relation_kind":"NA","doc_id":"d1","source":"ORIGINAL"}"#,
            r#"{"arg1":"c","arg2":"d","label":"contrast","framework":"PDTB","relation_kind":"EXPLICIT","connective":"but","doc_id":"wsj_0101"}"#,
        ]);
        let got = load_jsonl_dataset(f.path(), &taxonomy()).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[1].label, 1);
        assert_eq!(got[1].connective.as_deref(), Some("but"));
        assert_eq!(got[1].source, InstanceSource::Original);
    }

    #[test]
    fn empty_arg2_reports_line() {
        let f = write(&[
            r#"{"arg1":"a","arg2":"b","label":"cause","framework":"RST","doc_id":"d1"}"#,
            r#"{"arg1":"a","arg2":"  ","label":"cause","framework":"RST","doc_id":"d1"}"#,
        ]);
        match load_jsonl_dataset(f.path(), &taxonomy()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_label_listed() {
        let f = write(&[r#"{"arg1":"a","arg2":"b","label":"Causee","framework":"RST","doc_id":"d1"}"#]);
        match load_jsonl_dataset(f.path(), &taxonomy()) {
            Err(Error::UnknownLabels(names)) => assert_eq!(names, vec!["Causee".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line() {
        let f = write(&["{not json"]);
        assert!(matches!(
            load_jsonl_dataset(f.path(), &taxonomy()),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
