//! Back-translation augmentation through a pluggable translation client.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{InstanceSource, RelationInstance};

pub trait TranslationClient: Send + Sync {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String>;
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl TranslationClient for IdentityTranslator {
    fn translate(&self, text: &str, _: &str, _: &str) -> Result<String> {
        Ok(text.to_string())
    }
}

/// One recorded request/response pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedTranslation {
    pub source_lang: String,
    pub target_lang: String,
    pub text: String,
    pub output: String,
}

/// Replays recorded translations exactly; unrecorded requests fail.
#[derive(Debug, Clone, Default)]
pub struct RecordedTranslator {
    table: HashMap<(String, String, String), String>,
}

impl RecordedTranslator {
    pub fn new(records: impl IntoIterator<Item = RecordedTranslation>) -> Self {
        RecordedTranslator {
            table: records
                .into_iter()
                .map(|r| ((r.source_lang, r.target_lang, r.text), r.output))
                .collect(),
        }
    }

    /// Reads one JSON object per line.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<RecordedTranslation>>>()?;
        Ok(Self::new(records))
    }
}

impl TranslationClient for RecordedTranslator {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String> {
        self.table
            .get(&(source_lang.to_string(), target_lang.to_string(), text.to_string()))
            .cloned()
            .ok_or_else(|| Error::Translation(format!("no recording for {source_lang}->{target_lang}: {text:?}")))
    }
}

/// Client for a LibreTranslate-compatible HTTP endpoint
/// (`POST {q, source, target, format}` answering `{translatedText}`).
#[derive(Debug, Clone)]
pub struct HttpTranslator {
    pub endpoint: String,
    pub api_key: Option<String>,
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    q: &'a str,
    source: &'a str,
    target: &'a str,
    format: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    api_key: Option<&'a str>,
}

#[derive(Deserialize)]
struct HttpResponse {
    #[serde(rename = "translatedText")]
    translated_text: String,
}

impl TranslationClient for HttpTranslator {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String> {
        let req = HttpRequest {
            q: text,
            source: source_lang,
            target: target_lang,
            format: "text",
            api_key: self.api_key.as_deref(),
        };
        let resp: HttpResponse = ureq::post(&self.endpoint)
            .send_json(&req)
            .map_err(|e| Error::Translation(format!("{}: {e}", self.endpoint)))?
            .body_mut()
            .read_json()
            .map_err(|e| Error::Translation(format!("{}: {e}", self.endpoint)))?;
        Ok(resp.translated_text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentOptions {
    pub source_lang: String,
    pub pivot_lang: String,
    /// Upper bound on concurrent translation requests.
    pub max_in_flight: usize,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        AugmentOptions {
            source_lang: "en".into(),
            pivot_lang: "fr".into(),
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AugmentResult {
    /// Originals followed by the augmented copies, in input order.
    pub instances: Vec<RelationInstance>,
    pub attempted: usize,
    pub failed: usize,
}

fn round_trip(client: &dyn TranslationClient, text: &str, opts: &AugmentOptions) -> Result<String> {
    let pivot = client.translate(text, &opts.source_lang, &opts.pivot_lang)?;
    client.translate(&pivot, &opts.pivot_lang, &opts.source_lang)
}

/// Appends one round-trip-translated copy of every instance whose label is
/// not in `skip_labels`. Failed instances are skipped and counted; more than
/// half failing aborts.
pub fn backtranslate_augment(
    train: Vec<RelationInstance>,
    skip_labels: &HashSet<usize>,
    client: &dyn TranslationClient,
    opts: &AugmentOptions,
) -> Result<AugmentResult> {
    let candidates: Vec<&RelationInstance> = train.iter().filter(|i| !skip_labels.contains(&i.label)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.max_in_flight.max(1))
        .build()
        .map_err(|e| Error::Translation(format!("cannot start translation workers: {e}")))?;
    let first_error = Mutex::new(None::<String>);
    let copies: Vec<Option<RelationInstance>> = pool.install(|| {
        candidates
            .par_iter()
            .map(|inst| {
                let arg1 = round_trip(client, &inst.arg1, opts);
                let arg2 = round_trip(client, &inst.arg2, opts);
                match (arg1, arg2) {
                    (Ok(arg1), Ok(arg2)) => Some(RelationInstance {
                        arg1,
                        arg2,
                        source: InstanceSource::Augmented,
                        ..(*inst).clone()
                    }),
                    (Err(e), _) | (_, Err(e)) => {
                        first_error.lock().expect("not poisoned").get_or_insert(e.to_string());
                        None
                    }
                }
            })
            .collect()
    });
    let attempted = copies.len();
    let failed = copies.iter().filter(|c| c.is_none()).count();
    if failed > 0 {
        log::warn!(
            "back-translation failed for {failed} of {attempted} instance(s); first error: {}",
            first_error.lock().expect("not poisoned").as_deref().unwrap_or("")
        );
    }
    if failed * 2 > attempted {
        return Err(Error::AugmentationAborted { failed, total: attempted });
    }
    let mut instances = train;
    instances.extend(copies.into_iter().flatten());
    Ok(AugmentResult {
        instances,
        attempted,
        failed,
    })
}
