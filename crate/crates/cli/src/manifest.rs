//! Per-stage run manifests and the skip check for partial reruns.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub tool_version: String,
    pub seeds: Vec<u64>,
    /// Files read by the stage: upstream outputs relative to the run
    /// directory, external data as given.
    pub inputs: Vec<FileDigest>,
    /// Files written by the stage, relative to the run directory.
    pub outputs: Vec<FileDigest>,
    pub started_at: u64,
    pub finished_at: u64,
}

impl RunManifest {
    /// True when `other` describes the same computation, ignoring outputs
    /// and timestamps.
    pub fn same_inputs(&self, other: &RunManifest) -> bool {
        self.command == other.command
            && self.config_hash == other.config_hash
            && self.tool_version == other.tool_version
            && self.seeds == other.seeds
            && self.inputs == other.inputs
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    /// True when every recorded output still exists with its recorded digest.
    pub fn outputs_intact(&self, run_dir: &Path) -> bool {
        self.outputs
            .iter()
            .all(|o| digest_file(&run_dir.join(&o.path)).is_ok_and(|d| d == o.sha256))
    }
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Every regular file under `dir`, sorted, as paths relative to `dir`.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| CliError::io(&d, e))? {
            let entry = entry.map_err(|e| CliError::io(&d, e))?;
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).expect("under dir").to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

fn display(p: &Path) -> String {
    p.to_string_lossy().replace('\\', "/")
}

/// Digests of `files` (relative to `base`), keyed by `base`-relative path.
pub fn digest_relative(base: &Path, files: &[PathBuf]) -> Result<Vec<FileDigest>> {
    files
        .iter()
        .map(|f| {
            Ok(FileDigest {
                path: display(f),
                sha256: digest_file(&base.join(f))?,
            })
        })
        .collect()
}

/// Digest of an external file or of every file under an external directory.
pub fn digest_external(path: &Path) -> Result<Vec<FileDigest>> {
    if path.is_dir() {
        list_files(path)?
            .into_iter()
            .map(|f| {
                let full = path.join(&f);
                Ok(FileDigest {
                    sha256: digest_file(&full)?,
                    path: display(&full),
                })
            })
            .collect()
    } else {
        Ok(vec![FileDigest {
            path: display(path),
            sha256: digest_file(path)?,
        }])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> RunManifest {
        RunManifest {
            command: "train".into(),
            config_hash: "abc".into(),
            tool_version: TOOL_VERSION.into(),
            seeds: vec![1, 2],
            inputs: vec![FileDigest {
                path: "ingest/a/train.jsonl".into(),
                sha256: "00".into(),
            }],
            outputs: Vec::new(),
            started_at: 1,
            finished_at: 2,
        }
    }

    #[test]
    fn timestamps_do_not_affect_matching() {
        let a = manifest();
        let b = RunManifest {
            started_at: 50,
            finished_at: 60,
            ..a.clone()
        };
        assert!(a.same_inputs(&b));
        let c = RunManifest {
            seeds: vec![1],
            ..a.clone()
        };
        assert!(!a.same_inputs(&c));
    }

    #[test]
    fn tampered_output_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.txt"), "one").unwrap();
        let mut m = manifest();
        m.outputs = digest_relative(dir.path(), &[PathBuf::from("x.txt")]).unwrap();
        assert!(m.outputs_intact(dir.path()));
        fs::write(dir.path().join("x.txt"), "two").unwrap();
        assert!(!m.outputs_intact(dir.path()));
    }
}
