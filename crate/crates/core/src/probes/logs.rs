//! Probe-log ingestion. Logs are JSON Lines; the record shape decides the kind.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::backdoor::BackdoorTrial;
use super::edd::EddRecord;
use super::roc::{budget_key, ScoreRecord};
use super::ProbeError;

/// Externally computed probe metrics, ingested as reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummaryRecord {
    pub probe: String,
    pub auc: f64,
    /// Budget → TPR, e.g. `{"0.05": 0.5}`.
    pub tpr_at_fpr: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// Run metadata sidecar describing how a log was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub method: String,
    pub params: Map<String, Value>,
    pub seed: i64,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "records", rename_all = "snake_case")]
pub enum ProbeLog {
    Scores(Vec<ScoreRecord>),
    Edd(Vec<EddRecord>),
    Backdoor(Vec<BackdoorTrial>),
    Summary(Vec<ProbeSummaryRecord>),
}

impl ProbeLog {
    pub fn kind(&self) -> &'static str {
        match self {
            ProbeLog::Scores(_) => "scores",
            ProbeLog::Edd(_) => "edd",
            ProbeLog::Backdoor(_) => "backdoor",
            ProbeLog::Summary(_) => "summary",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ProbeLog::Scores(r) => r.len(),
            ProbeLog::Edd(r) => r.len(),
            ProbeLog::Backdoor(r) => r.len(),
            ProbeLog::Summary(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedProbeLog {
    /// File name, used as the probe label when no metadata names the method.
    pub name: String,
    pub log: ProbeLog,
    pub metadata: Option<RunMetadata>,
    /// SHA-256 of the log file, for provenance.
    pub sha256: String,
}

impl LoadedProbeLog {
    pub fn label(&self) -> String {
        match &self.metadata {
            Some(m) => m.method.clone(),
            None => self.name.trim_end_matches(".jsonl").to_string(),
        }
    }
}

/// A `--probe-log` input: a JSONL log, or a standalone metadata sidecar.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeInput {
    Log(LoadedProbeLog),
    Metadata(RunMetadata),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Scores,
    Edd,
    Backdoor,
    Summary,
}

fn kind_of(obj: &Map<String, Value>) -> Option<Kind> {
    if obj.contains_key("score") && obj.contains_key("label") {
        Some(Kind::Scores)
    } else if obj.contains_key("baseline") && obj.contains_key("samples") {
        Some(Kind::Edd)
    } else if obj.contains_key("trigger_present") {
        Some(Kind::Backdoor)
    } else if obj.contains_key("probe") && obj.contains_key("auc") {
        Some(Kind::Summary)
    } else {
        None
    }
}

fn summary_record(mut obj: Map<String, Value>) -> Result<ProbeSummaryRecord, String> {
    // Accept a scalar TPR (at the 5% budget) under either spelling.
    let tpr = obj
        .remove("tpr_at_fpr")
        .or_else(|| obj.remove("tpr_at_5_fpr"));
    let tpr_map = match tpr {
        Some(Value::Number(n)) => {
            BTreeMap::from([(budget_key(0.05), n.as_f64().ok_or("tpr is not a number")?)])
        }
        Some(Value::Object(m)) => m
            .into_iter()
            .map(|(k, v)| {
                v.as_f64()
                    .map(|f| (k, f))
                    .ok_or_else(|| "tpr map value is not a number".to_string())
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err("tpr_at_fpr must be a number or a map".into()),
        None => BTreeMap::new(),
    };
    obj.insert(
        "tpr_at_fpr".into(),
        serde_json::to_value(tpr_map).expect("map serializes"),
    );
    let rec: ProbeSummaryRecord =
        serde_json::from_value(Value::Object(obj)).map_err(|e| e.to_string())?;
    let in_unit = |x: f64| (0.0..=1.0).contains(&x);
    if !in_unit(rec.auc) || !rec.tpr_at_fpr.values().all(|&t| in_unit(t)) {
        return Err("auc and tpr values must lie in [0, 1]".into());
    }
    Ok(rec)
}

/// Parses JSON Lines probe records. Blank lines are skipped; every record must
/// have the same kind as the first.
pub fn parse_probe_log(text: &str, name: &str) -> Result<ProbeLog, ProbeError> {
    let err = |line: usize, reason: String| ProbeError::Log {
        path: name.to_string(),
        line,
        reason,
    };
    let mut kind = None;
    let mut log = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| err(line, e.to_string()))?;
        let Value::Object(obj) = value else {
            return Err(err(line, "record is not a JSON object".into()));
        };
        let this =
            kind_of(&obj).ok_or_else(|| err(line, "unrecognized probe record shape".into()))?;
        if *kind.get_or_insert(this) != this {
            return Err(err(
                line,
                "record kind differs from the first record".into(),
            ));
        }
        let log = log.get_or_insert_with(|| match this {
            Kind::Scores => ProbeLog::Scores(Vec::new()),
            Kind::Edd => ProbeLog::Edd(Vec::new()),
            Kind::Backdoor => ProbeLog::Backdoor(Vec::new()),
            Kind::Summary => ProbeLog::Summary(Vec::new()),
        });
        let obj = Value::Object(obj);
        match log {
            ProbeLog::Scores(v) => {
                let r: ScoreRecord =
                    serde_json::from_value(obj).map_err(|e| err(line, e.to_string()))?;
                if !r.score.is_finite() {
                    return Err(err(line, "score is not finite".into()));
                }
                v.push(r);
            }
            ProbeLog::Edd(v) => {
                let r: EddRecord =
                    serde_json::from_value(obj).map_err(|e| err(line, e.to_string()))?;
                v.push(r.with_distances());
            }
            ProbeLog::Backdoor(v) => {
                v.push(serde_json::from_value(obj).map_err(|e| err(line, e.to_string()))?)
            }
            ProbeLog::Summary(v) => {
                let Value::Object(o) = obj else {
                    unreachable!()
                };
                v.push(summary_record(o).map_err(|r| err(line, r))?);
            }
        }
    }
    log.ok_or_else(|| err(0, "log has no records".into()))
}

pub fn parse_run_metadata(bytes: &[u8], name: &str) -> Result<RunMetadata, ProbeError> {
    let err = |reason: String| ProbeError::Log {
        path: name.to_string(),
        line: 0,
        reason,
    };
    let m: RunMetadata = serde_json::from_slice(bytes).map_err(|e| err(e.to_string()))?;
    if m.method.trim().is_empty() || m.model_id.trim().is_empty() {
        return Err(err("method and model_id must be non-empty".into()));
    }
    Ok(m)
}

/// Sidecar path for a log: `scores.jsonl` → `scores.meta.json`.
pub fn sidecar_path(log: &Path) -> PathBuf {
    let stem = log
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    log.with_file_name(format!("{stem}.meta.json"))
}

/// Loads a probe input. `.json` files are metadata sidecars; anything else is a
/// JSONL log, paired with its sidecar when one exists.
pub fn load_probe_input(path: &Path) -> Result<ProbeInput, ProbeError> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let bytes = fs::read(path).map_err(|e| ProbeError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    if name.ends_with(".json") {
        return parse_run_metadata(&bytes, &name).map(ProbeInput::Metadata);
    }
    let text = String::from_utf8(bytes.clone()).map_err(|_| ProbeError::Log {
        path: name.clone(),
        line: 0,
        reason: "not UTF-8".into(),
    })?;
    let log = parse_probe_log(&text, &name)?;
    let sidecar = sidecar_path(path);
    let metadata = match fs::read(&sidecar) {
        Ok(b) => Some(parse_run_metadata(&b, &sidecar.display().to_string())?),
        Err(_) => None,
    };
    Ok(ProbeInput::Log(LoadedProbeLog {
        name,
        log,
        metadata,
        sha256: crate::canonical::sha256_hex(&bytes),
    }))
}
