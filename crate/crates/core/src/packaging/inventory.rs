//! Typed inventory of package files, classified by content with the extension
//! as a tie-breaker.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::finding::Finding;
use super::pickle;
use super::policy::{extension_of, PolicyConfig, SerializationFormat};
use super::safetensors::looks_like_safetensors;
use super::ScanError;
use crate::integrity::{is_config_file, is_tokenizer_file, list_files, RootFile};

const MAGIC_LEN: usize = 8;
const SNIFF_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectedKind {
    WeightsSafetensors,
    #[serde(rename = "weights_gguf")]
    WeightsGGUF,
    WeightsPickleContainer,
    OnnxGraph,
    Config,
    TokenizerAsset,
    NativeBinary,
    Document,
    Unknown,
}

impl DetectedKind {
    pub fn is_weights(self) -> bool {
        matches!(
            self,
            DetectedKind::WeightsSafetensors
                | DetectedKind::WeightsGGUF
                | DetectedKind::WeightsPickleContainer
                | DetectedKind::OnnxGraph
        )
    }

    pub fn format(self) -> Option<SerializationFormat> {
        match self {
            DetectedKind::WeightsSafetensors => Some(SerializationFormat::Safetensors),
            DetectedKind::WeightsGGUF => Some(SerializationFormat::Gguf),
            DetectedKind::WeightsPickleContainer => Some(SerializationFormat::Pickle),
            DetectedKind::OnnxGraph => Some(SerializationFormat::Onnx),
            _ => None,
        }
    }
}

/// Extensions conventionally used for weights. A file with one of these whose
/// content is not recognized still gets a guard decision.
pub const WEIGHT_EXTENSIONS: [&str; 10] = [
    "safetensors",
    "gguf",
    "onnx",
    "pt",
    "pth",
    "bin",
    "ckpt",
    "pkl",
    "pickle",
    "joblib",
];

const PICKLE_EXTENSIONS: [&str; 7] = ["pt", "pth", "bin", "ckpt", "pkl", "pickle", "joblib"];

const DOCUMENT_EXTENSIONS: [&str; 9] = [
    "md",
    "txt",
    "rst",
    "jinja",
    "yaml",
    "yml",
    "jsonl",
    "gitattributes",
    "html",
];

const DOCUMENT_NAMES: [&str; 5] = ["LICENSE", "README", "NOTICE", "COPYING", "USE_POLICY"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryEntry {
    pub relative_path: String,
    pub size_bytes: u64,
    pub detected_kind: DetectedKind,
    /// Hex of the first bytes of the file.
    pub magic: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileInventory {
    pub entries: Vec<InventoryEntry>,
}

impl FileInventory {
    pub fn get(&self, rel: &str) -> Option<&InventoryEntry> {
        self.entries.iter().find(|e| e.relative_path == rel)
    }

    pub fn of_kind(&self, kind: DetectedKind) -> impl Iterator<Item = &InventoryEntry> {
        self.entries.iter().filter(move |e| e.detected_kind == kind)
    }

    /// Files the loader guard must decide on: detected weights plus anything
    /// carrying a weight extension.
    pub fn weights_artifacts(&self) -> impl Iterator<Item = &InventoryEntry> {
        self.entries.iter().filter(|e| {
            e.detected_kind.is_weights()
                || WEIGHT_EXTENSIONS.contains(&extension_of(&e.relative_path).as_str())
        })
    }
}

fn is_native_magic(head: &[u8]) -> bool {
    const MAGICS: [&[u8]; 6] = [
        b"\x7fELF",
        b"\xfe\xed\xfa\xce",
        b"\xfe\xed\xfa\xcf",
        b"\xce\xfa\xed\xfe",
        b"\xcf\xfa\xed\xfe",
        b"\xca\xfe\xba\xbe",
    ];
    MAGICS.iter().any(|m| head.starts_with(m)) || head.starts_with(b"MZ")
}

fn file_name(rel: &str) -> &str {
    rel.rsplit('/').next().unwrap_or(rel)
}

/// Classifies one file from its leading bytes, its length and its path.
/// `zip_has_pickles` is consulted only for ZIP containers.
pub fn classify(
    rel: &str,
    head: &[u8],
    file_len: u64,
    zip_has_pickles: impl FnOnce() -> bool,
) -> DetectedKind {
    let ext = extension_of(rel);
    if head.starts_with(b"GGUF") {
        return DetectedKind::WeightsGGUF;
    }
    if is_native_magic(head) {
        return DetectedKind::NativeBinary;
    }
    if looks_like_safetensors(head, file_len) {
        return DetectedKind::WeightsSafetensors;
    }
    if pickle::is_zip(head) {
        return if zip_has_pickles() {
            DetectedKind::WeightsPickleContainer
        } else {
            DetectedKind::Unknown
        };
    }
    if pickle::looks_like_pickle(head) {
        return DetectedKind::WeightsPickleContainer;
    }
    // Protocol 0/1 pickles have no header; trust them only under a pickle extension.
    if PICKLE_EXTENSIONS.contains(&ext.as_str())
        && matches!(head.first(), Some(b'(' | b'c' | b']' | b'}' | b'K' | b'N'))
    {
        return DetectedKind::WeightsPickleContainer;
    }
    // ModelProto starts with ir_version (field 1, varint).
    if ext == "onnx" && head.first() == Some(&0x08) {
        return DetectedKind::OnnxGraph;
    }
    if is_config_file(rel) {
        return DetectedKind::Config;
    }
    let name = file_name(rel);
    if is_tokenizer_file(rel)
        || matches!(
            name,
            "tokenizer_config.json" | "special_tokens_map.json" | "added_tokens.json"
        )
    {
        return DetectedKind::TokenizerAsset;
    }
    if ext == "json" && name.ends_with("config.json") {
        return DetectedKind::Config;
    }
    let stem = name.split('.').next().unwrap_or(name);
    if DOCUMENT_EXTENSIONS.contains(&ext.as_str())
        || DOCUMENT_NAMES.contains(&stem)
        || ext == "json"
    {
        return DetectedKind::Document;
    }
    DetectedKind::Unknown
}

fn sniff(file: &RootFile) -> Result<Vec<u8>, ScanError> {
    let mut f = File::open(&file.resolved).map_err(|e| ScanError::io(&file.resolved, e))?;
    let mut head = Vec::with_capacity(SNIFF_LEN);
    (&mut f)
        .take(SNIFF_LEN as u64)
        .read_to_end(&mut head)
        .map_err(|e| ScanError::io(&file.resolved, e))?;
    Ok(head)
}

/// Classifies one listed file and reports inventory-level findings for it.
pub fn inventory_entry(
    file: &RootFile,
    policy: &PolicyConfig,
) -> Result<(InventoryEntry, Vec<Finding>), ScanError> {
    let rel = file.relative_path.as_str();
    let head = sniff(file)?;
    let kind = classify(rel, &head, file.size_bytes, || {
        pickle::zip_pickle_members(&file.resolved)
            .map(|m| !m.is_empty())
            .unwrap_or(false)
    });
    let entry = InventoryEntry {
        relative_path: rel.to_string(),
        size_bytes: file.size_bytes,
        detected_kind: kind,
        magic: hex::encode(&head[..head.len().min(MAGIC_LEN)]),
    };
    let mut findings = Vec::new();
    if kind == DetectedKind::NativeBinary {
        findings.push(
            Finding::warn(
                "inventory.native_binary",
                Some("2.2"),
                rel,
                "bundled native binary (ELF, PE or Mach-O)",
            )
            .with_evidence(json!({"magic": entry.magic})),
        );
    }
    let ext = extension_of(rel);
    if !policy.extension_allowed(rel) {
        findings.push(
            Finding::warn(
                "inventory.extension_not_allowed",
                None,
                rel,
                format!("extension {:?} is outside the file allowlist", ext),
            )
            .with_evidence(json!({"extension": ext})),
        );
    }
    let claimed = match ext.as_str() {
        "safetensors" => Some(DetectedKind::WeightsSafetensors),
        "gguf" => Some(DetectedKind::WeightsGGUF),
        "onnx" => Some(DetectedKind::OnnxGraph),
        _ => None,
    };
    if let Some(claimed) = claimed.filter(|c| *c != kind) {
        findings.push(
            Finding::warn(
                "inventory.kind_mismatch",
                Some("2.4"),
                rel,
                format!("extension claims {claimed:?} but content looks like {kind:?}"),
            )
            .with_evidence(json!({"extension": ext, "detected_kind": kind, "magic": entry.magic})),
        );
    }
    Ok((entry, findings))
}

/// Classifies every regular file under `dir`.
pub fn inventory_files(
    dir: &Path,
    policy: &PolicyConfig,
) -> Result<(FileInventory, Vec<Finding>), ScanError> {
    let files = list_files(dir, &|_| true)?;
    inventory_listed(&files, policy)
}

pub fn inventory_listed(
    files: &[RootFile],
    policy: &PolicyConfig,
) -> Result<(FileInventory, Vec<Finding>), ScanError> {
    let results = files
        .par_iter()
        .map(|f| inventory_entry(f, policy))
        .collect::<Result<Vec<_>, _>>()?;
    let mut inventory = FileInventory::default();
    let mut findings = Vec::new();
    for (entry, f) in results {
        inventory.entries.push(entry);
        findings.extend(f);
    }
    Ok((inventory, findings))
}
