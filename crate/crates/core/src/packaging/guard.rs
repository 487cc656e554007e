//! Load-time guard: one Pass / Blocked / Fail decision per weights artifact.
//!
//! Rules apply in order and the first match wins:
//! scan error, unrecognized weights content, blocked format, Critical serializer
//! finding, format not allowed (all Blocked); then the hash check (Fail); else Pass.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::finding::Finding;
use super::gguf::{scan_gguf_metadata, GgufMetadata};
use super::inventory::{inventory_listed, DetectedKind, InventoryEntry};
use super::onnx::{scan_onnx_ops, OnnxScan};
use super::pickle::scan_pickle_container;
use super::policy::{extension_of, PolicyConfig};
use super::safetensors::{parse_safetensors_header, SafetensorsHeader};
use super::ScanError;
use crate::integrity::{hash_file, list_files, HashManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuardOutcome {
    Pass,
    Blocked,
    Fail,
}

impl fmt::Display for GuardOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GuardOutcome::Pass => "Pass",
            GuardOutcome::Blocked => "Blocked",
            GuardOutcome::Fail => "Fail",
        })
    }
}

/// The rule that decided an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardRule {
    ScanError,
    UnrecognizedWeights,
    BlockedFormat,
    CriticalFinding,
    FormatNotAllowed,
    HashMismatch,
    NotInManifest,
    NoReferenceDigest,
    HashMatch,
    HashRecorded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardResult {
    pub artifact_path: String,
    /// Detected format, e.g. `safetensors` or `pickle/pt`.
    pub serialization: String,
    pub outcome: GuardOutcome,
    pub rule: GuardRule,
    pub reason: String,
    pub policy_digest: String,
    pub timing_ms: f64,
}

impl GuardResult {
    /// Short outcome label for report tables, e.g. `Fail (hash mismatch)`.
    pub fn label(&self) -> String {
        let detail = match self.rule {
            GuardRule::HashMatch => "hash match",
            GuardRule::HashRecorded => "hash recorded",
            GuardRule::HashMismatch => "hash mismatch",
            GuardRule::NotInManifest => "not in manifest",
            GuardRule::NoReferenceDigest => "no reference digest",
            _ => "fail",
        };
        format!("{} ({detail})", self.outcome)
    }
}

/// How an artifact's digest compares with the reference manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntegrityStatus {
    Match,
    Mismatch {
        expected: String,
        actual: String,
    },
    NotInManifest,
    NoManifest,
    /// The file could not be hashed.
    Unreadable(String),
}

impl IntegrityStatus {
    pub fn compare(reference: Option<&HashManifest>, rel: &str, actual: &str) -> Self {
        match reference {
            None => IntegrityStatus::NoManifest,
            Some(m) => match m.get(rel) {
                None => IntegrityStatus::NotInManifest,
                Some(e) if e.sha256 == actual => IntegrityStatus::Match,
                Some(e) => IntegrityStatus::Mismatch {
                    expected: e.sha256.clone(),
                    actual: actual.to_string(),
                },
            },
        }
    }
}

/// Format-specific results kept for the evidence fields.
#[derive(Debug, Clone)]
pub enum ArtifactDetail {
    Safetensors(SafetensorsHeader),
    Gguf(GgufMetadata),
    Onnx(OnnxScan),
    Pickle { globals: Vec<String> },
    None,
}

#[derive(Debug, Clone)]
pub struct ArtifactScan {
    pub findings: Vec<Finding>,
    pub error: Option<String>,
    pub detail: ArtifactDetail,
}

fn relabel(mut findings: Vec<Finding>, rel: &str) -> Vec<Finding> {
    for f in &mut findings {
        f.path = rel.to_string();
    }
    findings
}

/// Runs the format-specific serializer scan for one weights artifact.
pub fn scan_weights_artifact(
    path: &Path,
    rel: &str,
    kind: DetectedKind,
    policy: &PolicyConfig,
) -> ArtifactScan {
    let result: Result<(Vec<Finding>, ArtifactDetail), ScanError> = match kind {
        DetectedKind::WeightsSafetensors => parse_safetensors_header(path)
            .map(|(h, f)| (relabel(f, rel), ArtifactDetail::Safetensors(h))),
        DetectedKind::WeightsGGUF => scan_gguf_metadata(path, policy)
            .map(|(m, f)| (relabel(f, rel), ArtifactDetail::Gguf(m))),
        DetectedKind::OnnxGraph => {
            scan_onnx_ops(path, policy).map(|(s, f)| (relabel(f, rel), ArtifactDetail::Onnx(s)))
        }
        DetectedKind::WeightsPickleContainer => scan_pickle_container(path, rel).map(|r| {
            (
                relabel(r.findings, rel),
                ArtifactDetail::Pickle { globals: r.globals },
            )
        }),
        _ => Ok((Vec::new(), ArtifactDetail::None)),
    };
    match result {
        Ok((findings, detail)) => ArtifactScan {
            findings,
            error: None,
            detail,
        },
        Err(e) => ArtifactScan {
            findings: Vec::new(),
            error: Some(e.to_string()),
            detail: ArtifactDetail::None,
        },
    }
}

/// Display name of an artifact's serialization.
pub fn serialization_name(rel: &str, kind: DetectedKind) -> String {
    match kind.format() {
        Some(super::SerializationFormat::Pickle) => {
            let ext = extension_of(rel);
            if ext.is_empty() || ext == "pkl" || ext == "pickle" {
                "pickle".into()
            } else {
                format!("pickle/{ext}")
            }
        }
        Some(f) => f.to_string(),
        None => "unknown".into(),
    }
}

/// Applies the guard rules to one artifact.
pub fn decide(
    entry: &InventoryEntry,
    scan: &ArtifactScan,
    integrity: &IntegrityStatus,
    policy: &PolicyConfig,
    policy_digest: &str,
    timing_ms: f64,
) -> GuardResult {
    let rel = entry.relative_path.as_str();
    let format = entry.detected_kind.format();
    let critical = scan
        .findings
        .iter()
        .find(|f| f.is_critical() && f.path == rel);
    let (outcome, rule, reason) = if let Some(err) = &scan.error {
        (
            GuardOutcome::Blocked,
            GuardRule::ScanError,
            format!("fail-closed policy: scan error: {err}"),
        )
    } else if let IntegrityStatus::Unreadable(err) = integrity {
        (
            GuardOutcome::Blocked,
            GuardRule::ScanError,
            format!("fail-closed policy: scan error: {err}"),
        )
    } else if format.is_none() {
        (
            GuardOutcome::Blocked,
            GuardRule::UnrecognizedWeights,
            format!("allowed_formats policy: content of {rel} matches no allowed weights format"),
        )
    } else if let Some(f) = format.filter(|f| policy.blocked_formats.contains(f)) {
        (
            GuardOutcome::Blocked,
            GuardRule::BlockedFormat,
            format!("blocked_formats policy: {f} is a blocked serializer"),
        )
    } else if let Some(c) = critical {
        (
            GuardOutcome::Blocked,
            GuardRule::CriticalFinding,
            format!("serializer scan policy: {} ({})", c.reason, c.id),
        )
    } else if let Some(f) = format.filter(|f| !policy.allowed_formats.contains(f)) {
        (
            GuardOutcome::Blocked,
            GuardRule::FormatNotAllowed,
            format!("allowed_formats policy: {f} is not allowed"),
        )
    } else if !policy.require_hash_match {
        (
            GuardOutcome::Pass,
            GuardRule::HashRecorded,
            "hash recorded; require_hash_match is off".to_string(),
        )
    } else {
        match integrity {
            IntegrityStatus::Match => (
                GuardOutcome::Pass,
                GuardRule::HashMatch,
                "hash match".to_string(),
            ),
            IntegrityStatus::Mismatch { expected, actual } => (
                GuardOutcome::Fail,
                GuardRule::HashMismatch,
                format!("integrity: hash mismatch (expected {expected}, actual {actual})"),
            ),
            IntegrityStatus::NotInManifest => (
                GuardOutcome::Fail,
                GuardRule::NotInManifest,
                "integrity: artifact missing from the reference manifest".to_string(),
            ),
            IntegrityStatus::NoManifest | IntegrityStatus::Unreadable(_) => (
                GuardOutcome::Fail,
                GuardRule::NoReferenceDigest,
                "integrity: no reference digest to verify against".to_string(),
            ),
        }
    };
    GuardResult {
        artifact_path: rel.to_string(),
        serialization: serialization_name(rel, entry.detected_kind),
        outcome,
        rule,
        reason,
        policy_digest: policy_digest.to_string(),
        timing_ms,
    }
}

pub(crate) fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_micros() as f64 / 1000.0
}

/// Inventories `dir`, scans every weights artifact and decides each one.
/// Only failure to enumerate the directory is an error; per-artifact scan
/// errors become Blocked outcomes.
pub fn enforce_loader_policy(
    dir: &Path,
    policy: &PolicyConfig,
    manifest: Option<&HashManifest>,
) -> Result<Vec<GuardResult>, ScanError> {
    let files = list_files(dir, &|_| true)?;
    let (inventory, _) = inventory_listed(&files, policy)?;
    let digest = policy.digest();
    let mut results: Vec<GuardResult> = inventory
        .weights_artifacts()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|entry| {
            let start = Instant::now();
            let file = files
                .iter()
                .find(|f| f.relative_path == entry.relative_path)
                .expect("inventory comes from listing");
            let scan = scan_weights_artifact(
                &file.resolved,
                &entry.relative_path,
                entry.detected_kind,
                policy,
            );
            let integrity = match hash_file(&file.resolved) {
                Ok(actual) => IntegrityStatus::compare(manifest, &entry.relative_path, &actual),
                Err(e) => IntegrityStatus::Unreadable(e.to_string()),
            };
            decide(entry, &scan, &integrity, policy, &digest, elapsed_ms(start))
        })
        .collect();
    results.sort_by(|a, b| a.artifact_path.cmp(&b.artifact_path));
    Ok(results)
}
