use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::StructureError;
use crate::integrity::{hash_file, list_files, RootFile};
use crate::packaging::Finding;

const THREAT_ADAPTER_INJECTION: &str = "3.4";
const WEIGHT_NAMES: [&str; 3] = [
    "adapter_model.safetensors",
    "adapter_model.bin",
    "adapter_model.pt",
];
/// JSON files larger than this are not sniffed for adapter signatures.
const SNIFF_LIMIT: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdapterKind {
    LoRA,
    PEFTOther,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterRecord {
    /// Directory holding the adapter, relative to the scan root (`.` for the root).
    pub adapter_path: String,
    pub kind: AdapterKind,
    pub peft_type: Option<String>,
    pub rank: Option<u64>,
    pub target_modules: Vec<String>,
    pub base_model: Option<String>,
    pub config_path: String,
    pub config_digest: String,
    pub weights_path: Option<String>,
    pub weights_digest: Option<String>,
}

/// An adapter the publisher says is attached, with its attach points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclaredAdapter {
    pub path: String,
    #[serde(default)]
    pub attach_points: Vec<String>,
}

/// Declared-adapter list. Accepts `{"adapters": [...]}` or a bare array, whose
/// items are objects with a `path` or plain path strings.
pub fn parse_declared_adapters(bytes: &[u8]) -> Result<Vec<DeclaredAdapter>, StructureError> {
    let bad = |why: &str| StructureError::Parse {
        path: "declared adapters".into(),
        reason: why.to_string(),
    };
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| bad(&e.to_string()))?;
    let list = match &doc {
        Value::Array(items) => items,
        Value::Object(o) => o
            .get("adapters")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing adapters array"))?,
        _ => return Err(bad("expected an array or an object with adapters")),
    };
    list.iter()
        .map(|item| match item {
            Value::String(s) => Ok(DeclaredAdapter {
                path: normalize(s),
                attach_points: Vec::new(),
            }),
            other => serde_json::from_value::<DeclaredAdapter>(other.clone())
                .map(|d| DeclaredAdapter {
                    path: normalize(&d.path),
                    ..d
                })
                .map_err(|e| bad(&e.to_string())),
        })
        .collect()
}

fn normalize(p: &str) -> String {
    let t = p.trim_matches('/').trim_start_matches("./");
    if t.is_empty() {
        ".".into()
    } else {
        t.to_string()
    }
}

fn parent_of(rel: &str) -> String {
    match rel.rfind('/') {
        Some(i) => rel[..i].to_string(),
        None => ".".into(),
    }
}

fn name_of(rel: &str) -> &str {
    rel.rsplit('/').next().unwrap_or(rel)
}

fn read_adapter_config(file: &RootFile) -> Option<Value> {
    let name = name_of(&file.relative_path);
    let is_named = name == "adapter_config.json";
    if !is_named && !(name.ends_with(".json") && file.size_bytes <= SNIFF_LIMIT) {
        return None;
    }
    let doc: Value = serde_json::from_slice(&fs::read(&file.resolved).ok()?).ok()?;
    (is_named || doc.get("peft_type").is_some()).then_some(doc)
}

fn classify(doc: &Value) -> (AdapterKind, Option<String>, Option<u64>) {
    let peft_type = doc
        .get("peft_type")
        .and_then(Value::as_str)
        .map(str::to_string);
    let rank = doc.get("r").and_then(Value::as_u64);
    let kind = match peft_type.as_deref().map(str::to_ascii_uppercase).as_deref() {
        Some("LORA") if rank.is_some() => AdapterKind::LoRA,
        Some("LORA") | None => AdapterKind::Unknown,
        Some(_) => AdapterKind::PEFTOther,
    };
    (kind, peft_type, rank)
}

fn target_modules(doc: &Value) -> Vec<String> {
    match doc.get("target_modules") {
        Some(Value::Array(a)) => a
            .iter()
            .filter_map(Value::as_str)
            .map(str::to_string)
            .collect(),
        // PEFT also accepts a single regex string.
        Some(Value::String(s)) => vec![s.clone()],
        _ => Vec::new(),
    }
}

/// Finds adapters under `dir` and compares them with an optional declared list.
pub fn adapter_inventory(
    dir: &Path,
    declared: Option<&[DeclaredAdapter]>,
) -> Result<(Vec<AdapterRecord>, Vec<Finding>), StructureError> {
    let files = list_files(dir, &|_| true)?;
    adapter_inventory_listed(&files, declared)
}

pub fn adapter_inventory_listed(
    files: &[RootFile],
    declared: Option<&[DeclaredAdapter]>,
) -> Result<(Vec<AdapterRecord>, Vec<Finding>), StructureError> {
    let mut weights_by_dir: BTreeMap<String, Vec<&RootFile>> = BTreeMap::new();
    for f in files
        .iter()
        .filter(|f| WEIGHT_NAMES.contains(&name_of(&f.relative_path)))
    {
        weights_by_dir
            .entry(parent_of(&f.relative_path))
            .or_default()
            .push(f);
    }
    let mut records = Vec::new();
    let mut findings = Vec::new();
    let mut config_dirs = BTreeSet::new();
    for file in files {
        let Some(doc) = read_adapter_config(file) else {
            continue;
        };
        let dir = parent_of(&file.relative_path);
        let weights = weights_by_dir.get(&dir).and_then(|w| w.first().copied());
        let (kind, peft_type, rank) = classify(&doc);
        if weights.is_none() {
            findings.push(Finding::warn(
                "adapter.missing_weights",
                None,
                &file.relative_path,
                "adapter config without adapter weights",
            ));
        }
        records.push(AdapterRecord {
            adapter_path: dir.clone(),
            kind,
            peft_type,
            rank,
            target_modules: target_modules(&doc),
            base_model: doc
                .get("base_model_name_or_path")
                .and_then(Value::as_str)
                .map(str::to_string),
            config_path: file.relative_path.clone(),
            config_digest: hash_file(&file.resolved)?,
            weights_path: weights.map(|w| w.relative_path.clone()),
            weights_digest: weights.map(|w| hash_file(&w.resolved)).transpose()?,
        });
        config_dirs.insert(dir);
    }
    for (dir, weights) in &weights_by_dir {
        if !config_dirs.contains(dir) {
            for w in weights {
                findings.push(Finding::warn(
                    "adapter.orphan_weights",
                    Some(THREAT_ADAPTER_INJECTION),
                    &w.relative_path,
                    "adapter weights without an adapter config",
                ));
            }
        }
    }
    if let Some(declared) = declared {
        let known: BTreeSet<&str> = declared.iter().map(|d| d.path.as_str()).collect();
        for r in records
            .iter()
            .filter(|r| !known.contains(r.adapter_path.as_str()))
        {
            findings.push(
                Finding::warn(
                    "adapter.undeclared",
                    Some(THREAT_ADAPTER_INJECTION),
                    &r.config_path,
                    format!("adapter at {} is not in the declared adapter list", r.adapter_path),
                )
                .with_evidence(json!({"adapter_path": r.adapter_path, "kind": r.kind, "target_modules": r.target_modules})),
            );
        }
        let found: BTreeSet<&str> = records.iter().map(|r| r.adapter_path.as_str()).collect();
        for d in declared.iter().filter(|d| !found.contains(d.path.as_str())) {
            findings.push(Finding::info(
                "adapter.declared_missing",
                None,
                &d.path,
                format!("declared adapter {} was not found", d.path),
            ));
        }
    }
    records.sort_by(|a, b| a.config_path.cmp(&b.config_path));
    Ok((records, findings))
}
