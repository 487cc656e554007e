//! End-to-end scan of a model directory: inventory, serializer scans, manifest
//! build and verification, loader guard, structure scans, probe-log metrics,
//! artifact assembly, lint and export.
//!
//! Stage failures that leave the rest of the scan meaningful are recorded as
//! findings and the affected field stays Absent. Only unusable inputs (missing
//! model directory, invalid policy, baseline or reference manifest) abort the
//! scan with a [`PipelineError`].

mod baseline;
mod disclosure;
pub mod fixtures;
mod probe_fields;
mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::evidence::{
    assemble_artifact_with, lint_requirements, schema, AssembleOptions, EvidenceArtifact,
    FieldRecord, LintReport, LintVerdict, ModelIdentity, SourceType, ToolInfo,
};
use crate::export::{crosswalk_report, export_cdx, export_spdx, CoverageReport, ExportError};
use crate::integrity::{
    build_manifest, compare_manifests, default_manifest_filter, fingerprint_config,
    fingerprint_family, fingerprint_tokenizer, is_config_file, is_tokenizer_file, list_files,
    merkle_root, HashManifest, RootFile,
};
use crate::packaging::gguf::{scan_template_file, GgufValue};
use crate::packaging::guard::{decide, scan_weights_artifact};
use crate::packaging::inventory::inventory_listed;
use crate::packaging::{
    extension_of, ArtifactDetail, ArtifactScan, DetectedKind, Finding, GuardOutcome, GuardResult,
    IntegrityStatus, PolicyConfig, SafetensorsHeader, Severity,
};
use crate::structure::{
    adapter_inventory_listed, parse_declared_adapters, shape_consistency, tensor_checksums,
    tensor_stats, StatsSettings,
};

pub use baseline::baseline_drift;
pub use disclosure::{parse_disclosure, Disclosure, DISCLOSURE_FILE};
pub use probe_fields::{probe_evidence, MetricSource, ProbeEvidence, ProbeRow};
pub use report::{output_stem, render_report, write_outputs, ReportFormat};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_WARN: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Inputs the scan cannot proceed without. All map to exit code 3.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportTarget {
    Spdx,
    Cdx,
}

impl ExportTarget {
    /// File suffix of the exported document.
    pub fn suffix(self) -> &'static str {
        match self {
            ExportTarget::Spdx => "spdx.airs.json",
            ExportTarget::Cdx => "cdx.airs.json",
        }
    }
}

impl fmt::Display for ExportTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportTarget::Spdx => "spdx",
            ExportTarget::Cdx => "cdx",
        })
    }
}

impl FromStr for ExportTarget {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spdx" => Ok(ExportTarget::Spdx),
            "cdx" | "cyclonedx" => Ok(ExportTarget::Cdx),
            other => Err(format!(
                "unknown export target {other:?} (expected spdx or cdx)"
            )),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScanRequest {
    pub model_dir: PathBuf,
    /// `None` uses the built-in default policy.
    pub policy_path: Option<PathBuf>,
    pub baseline_artifact: Option<PathBuf>,
    /// Reference hash manifest. When unset, a single top-level `*.manifest.json`
    /// in the model directory is used.
    pub reference_manifest: Option<PathBuf>,
    pub probe_logs: Vec<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub reproducible: bool,
    pub export_targets: BTreeSet<ExportTarget>,
    /// Export even when Must fields are missing.
    pub force_export: bool,
    /// Overrides the policy's sampling seed.
    pub seed_override: Option<u64>,
}

impl ScanRequest {
    pub fn new(model_dir: impl Into<PathBuf>) -> Self {
        ScanRequest {
            model_dir: model_dir.into(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanReport {
    pub artifact: EvidenceArtifact,
    pub guard_results: Vec<GuardResult>,
    /// Sorted by severity (most severe first), then path and id.
    pub findings: Vec<Finding>,
    pub lint: LintReport,
    pub probe_rows: Vec<ProbeRow>,
    pub exports: BTreeMap<ExportTarget, Value>,
    pub coverage: CoverageReport,
    pub exit_code: i32,
}

/// 1 for missing Must fields, Blocked or Fail guard outcomes, or Critical
/// findings; otherwise 2 for missing Should fields or Warn findings; else 0.
pub fn exit_code(lint: &LintReport, guard_results: &[GuardResult], findings: &[Finding]) -> i32 {
    let failed = lint.verdict == LintVerdict::FailMust
        || guard_results
            .iter()
            .any(|g| g.outcome != GuardOutcome::Pass)
        || findings.iter().any(|f| f.severity == Severity::Critical);
    if failed {
        EXIT_FAIL
    } else if lint.verdict == LintVerdict::WarnShould
        || findings.iter().any(|f| f.severity == Severity::Warn)
    {
        EXIT_WARN
    } else {
        EXIT_PASS
    }
}

/// Files the scan treats as part of the model: everything except manifests and
/// airscan's own outputs.
pub fn scan_filter(rel: &str) -> bool {
    default_manifest_filter(rel) && !rel.ends_with(".airs.txt")
}

/// Timestamp used in reproducible mode: `SOURCE_DATE_EPOCH` when set, else the epoch.
pub fn reproducible_timestamp() -> DateTime<Utc> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|t| DateTime::from_timestamp(t, 0))
        .unwrap_or(DateTime::UNIX_EPOCH)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

fn stage_error(stage: &str, path: &str, e: impl fmt::Display) -> Finding {
    Finding::warn(
        &format!("stage.{stage}"),
        None,
        path,
        format!("{stage} stage failed: {e}"),
    )
}

const SIGNATURE_SUFFIXES: [&str; 5] = [
    ".sig",
    ".sigstore",
    ".sigstore.json",
    ".intoto.jsonl",
    ".asc",
];
const TEMPLATE_FILES: [&str; 2] = ["tokenizer_config.json", "chat_template.json"];

/// Default producer of a field when nothing was recorded for it.
fn default_source(key: &str) -> SourceType {
    match key {
        "hash_manifest"
        | "dir_merkle"
        | "config_fingerprint"
        | "family_fingerprint"
        | "quantization"
        | "adapter_inventory"
        | "adapter_hashes"
        | "shape_consistency_report"
        | "tensor_checksums"
        | "tensor_stats" => SourceType::MeasuredByScanner,
        k if k.starts_with("tokenizer") => SourceType::MeasuredByScanner,
        k if schema::by_key(k).is_some_and(|s| s.id.starts_with("2.")) => {
            SourceType::MeasuredByScanner
        }
        k if schema::by_key(k).is_some_and(|s| s.id.starts_with("4.")) => SourceType::ThirdParty,
        _ => SourceType::PublisherAssertion,
    }
}

/// Collects scanner-produced records; absent notes explain why a field is missing.
#[derive(Default)]
struct Records {
    present: BTreeMap<String, FieldRecord>,
    absent_notes: BTreeMap<String, String>,
}

impl Records {
    fn measured(&mut self, key: &str, value: Value, notes: &str) {
        self.present
            .insert(key.to_string(), FieldRecord::measured(key, value, notes));
    }
    fn record(&mut self, rec: FieldRecord) {
        self.present.insert(rec.key.clone(), rec);
    }
    fn absent(&mut self, key: &str, notes: impl Into<String>) {
        self.absent_notes.insert(key.to_string(), notes.into());
    }
}

struct WeightsScan {
    guard: GuardResult,
    scan: ArtifactScan,
    kind: DetectedKind,
    resolved: PathBuf,
}

fn load_policy(req: &ScanRequest) -> Result<PolicyConfig, PipelineError> {
    let mut policy = match &req.policy_path {
        Some(p) => PolicyConfig::load(p)
            .map_err(|e| PipelineError::Config(format!("policy {}: {e}", p.display())))?,
        None => PolicyConfig::default(),
    };
    if let Some(seed) = req.seed_override {
        policy.tensor_stats.seed = seed;
    }
    Ok(policy)
}

fn load_reference(
    req: &ScanRequest,
    all_files: &[RootFile],
    findings: &mut Vec<Finding>,
) -> Result<Option<(String, HashManifest)>, PipelineError> {
    let load = |p: &Path| {
        HashManifest::load(p)
            .map(|m| Some((file_name(p), m)))
            .map_err(|e| PipelineError::Config(format!("reference manifest {}: {e}", p.display())))
    };
    if let Some(p) = &req.reference_manifest {
        return load(p);
    }
    let candidates: Vec<&RootFile> = all_files
        .iter()
        .filter(|f| !f.relative_path.contains('/') && f.relative_path.ends_with(".manifest.json"))
        .collect();
    match candidates.as_slice() {
        [] => Ok(None),
        [one] => load(&one.resolved),
        many => {
            let names: Vec<&str> = many.iter().map(|f| f.relative_path.as_str()).collect();
            findings.push(Finding::warn(
                "integrity.ambiguous_manifest",
                None,
                ".",
                format!(
                    "several candidate reference manifests ({}); none used",
                    names.join(", ")
                ),
            ));
            Ok(None)
        }
    }
}

/// Runs the full scan. Pure with respect to the output directory: nothing is
/// written here; see [`write_outputs`].
pub fn run_scan(req: &ScanRequest) -> Result<ScanReport, PipelineError> {
    let dir = req.model_dir.as_path();
    if !dir.is_dir() {
        return Err(PipelineError::Config(format!(
            "model directory {} does not exist",
            dir.display()
        )));
    }
    let policy = load_policy(req)?;
    let baseline = req
        .baseline_artifact
        .as_ref()
        .map(|p| {
            let bytes =
                fs::read(p).map_err(|e| PipelineError::Io(format!("{}: {e}", p.display())))?;
            EvidenceArtifact::from_json(&bytes)
                .map_err(|e| PipelineError::Config(format!("baseline {}: {e}", p.display())))
        })
        .transpose()?;

    let mut findings = Vec::new();
    let mut recs = Records::default();
    let io = |e: crate::integrity::IntegrityError| PipelineError::Io(e.to_string());

    let all_files = list_files(dir, &|_| true).map_err(io)?;
    let files: Vec<RootFile> = all_files
        .iter()
        .filter(|f| scan_filter(&f.relative_path))
        .cloned()
        .collect();
    let by_path: HashMap<&str, &RootFile> = files
        .iter()
        .map(|f| (f.relative_path.as_str(), f))
        .collect();
    let reference = load_reference(req, &all_files, &mut findings)?;

    // Manifest, Merkle root and reference verification.
    let manifest = build_manifest(dir, &scan_filter).map_err(io)?;
    recs.measured(
        "hash_manifest",
        json!({"entries": manifest.entries()}),
        "SHA-256 of every file in the model directory",
    );
    match merkle_root(&manifest) {
        Ok(root) => recs.measured(
            "dir_merkle",
            serde_json::to_value(root).expect("serializes"),
            "Merkle root over the hash manifest",
        ),
        Err(e) => recs.absent("dir_merkle", e.to_string()),
    }
    if let Some((name, reference)) = &reference {
        let v = compare_manifests(reference, &manifest);
        for m in &v.mismatched {
            findings.push(
                Finding::critical(
                    "integrity.hash_mismatch",
                    "4.1",
                    &m.path,
                    format!("digest differs from reference manifest {name}"),
                )
                .with_evidence(json!({"expected": m.expected, "actual": m.actual})),
            );
        }
        for p in &v.missing {
            findings.push(Finding::warn(
                "integrity.missing_file",
                Some("4.1"),
                p,
                format!("listed in {name} but not present"),
            ));
        }
        for p in &v.extra {
            findings.push(Finding::info(
                "integrity.unlisted_file",
                None,
                p,
                format!("not listed in {name}"),
            ));
        }
    }

    // Signature material is recorded by presence only; it is not verified here.
    let sig_files: Vec<Value> = manifest
        .entries()
        .iter()
        .filter(|e| {
            SIGNATURE_SUFFIXES
                .iter()
                .any(|s| e.relative_path.ends_with(s))
        })
        .map(|e| json!({"path": e.relative_path, "sha256": e.sha256}))
        .collect();
    if sig_files.is_empty() {
        recs.absent(
            "signature_bundle",
            "no signature material in the model directory",
        );
    } else {
        recs.measured(
            "signature_bundle",
            json!({"files": sig_files, "verified": false}),
            "signature files found; not cryptographically verified",
        );
    }

    // Inventory.
    let (inventory, inv_findings) =
        inventory_listed(&files, &policy).map_err(|e| PipelineError::Io(e.to_string()))?;
    let violations: Vec<&str> = inv_findings
        .iter()
        .filter(|f| f.id == "inventory.extension_not_allowed")
        .map(|f| f.path.as_str())
        .collect();
    recs.measured(
        "file_inventory",
        json!({"entries": inventory.entries}),
        "typed inventory by content sniffing",
    );
    let binaries: Vec<_> = inventory.of_kind(DetectedKind::NativeBinary).collect();
    recs.measured(
        "binary_inventory",
        json!({"entries": binaries}),
        "files with ELF, PE or Mach-O headers",
    );
    recs.measured(
        "allowlist_policy",
        json!({"extension_allowlist": policy.extension_allowlist, "violations": violations}),
        "extension allowlist applied to every file",
    );
    findings.extend(inv_findings);

    // Serializer scans and the loader guard.
    let policy_digest = policy.digest();
    let weights: Vec<_> = inventory.weights_artifacts().collect();
    let scans: Vec<WeightsScan> = weights
        .par_iter()
        .map(|entry| {
            let start = Instant::now();
            let rel = entry.relative_path.as_str();
            let file = by_path[rel];
            let scan = scan_weights_artifact(&file.resolved, rel, entry.detected_kind, &policy);
            let integrity = match manifest.get(rel) {
                Some(m) => {
                    IntegrityStatus::compare(reference.as_ref().map(|(_, r)| r), rel, &m.sha256)
                }
                None => IntegrityStatus::Unreadable("file was not hashed".into()),
            };
            let timing = if req.reproducible {
                0.0
            } else {
                crate::packaging::guard::elapsed_ms(start)
            };
            let guard = decide(entry, &scan, &integrity, &policy, &policy_digest, timing);
            WeightsScan {
                guard,
                scan,
                kind: entry.detected_kind,
                resolved: file.resolved.clone(),
            }
        })
        .collect();
    let guard_results: Vec<GuardResult> = scans.iter().map(|s| s.guard.clone()).collect();

    let mut serializer_findings = Vec::new();
    let mut metadata_findings = Vec::new();
    let mut artifacts = Vec::new();
    let mut gguf_files = Vec::new();
    let mut onnx_graphs = Vec::new();
    let mut headers: Vec<(&str, &Path, &SafetensorsHeader)> = Vec::new();
    for s in &scans {
        let rel = s.guard.artifact_path.as_str();
        let (template, other): (Vec<Finding>, Vec<Finding>) = s
            .scan
            .findings
            .iter()
            .cloned()
            .partition(|f| f.id.starts_with("template."));
        let status = match (&s.scan.error, other.iter().any(Finding::is_critical)) {
            (Some(_), _) => "error",
            (None, true) => "flagged",
            (None, false) => "clean",
        };
        let mut entry = json!({
            "path": rel,
            "serialization": s.guard.serialization,
            "detected_kind": s.kind,
            "status": status,
            "finding_ids": other.iter().map(|f| f.id.as_str()).collect::<Vec<_>>(),
        });
        if let Some(e) = &s.scan.error {
            entry["error"] = json!(e);
        }
        match &s.scan.detail {
            ArtifactDetail::Pickle { globals } => entry["globals"] = json!(globals),
            ArtifactDetail::Safetensors(h) => {
                entry["tensor_count"] = json!(h.tensors.len());
                if status == "clean" {
                    headers.push((rel, s.resolved.as_path(), h));
                }
            }
            ArtifactDetail::Gguf(m) => {
                let template_keys: Vec<&String> = m.metadata.keys().filter(|k| k.contains("chat_template")).collect();
                let general: BTreeMap<&String, &GgufValue> =
                    m.metadata.iter().filter(|(k, _)| k.starts_with("general.")).collect();
                gguf_files.push(json!({
                    "path": rel,
                    "version": m.version,
                    "tensor_count": m.tensor_count,
                    "kv_count": m.kv_count,
                    "template_keys": template_keys,
                    "general": general,
                }));
            }
            ArtifactDetail::Onnx(o) => onnx_graphs.push(json!({
                "path": rel,
                "operators": o.operators,
                "opset_domains": o.opset_domains,
                "external_data": o.external_data,
                "finding_ids": other.iter().filter(|f| f.id.starts_with("onnx.")).map(|f| f.id.as_str()).collect::<Vec<_>>(),
            })),
            ArtifactDetail::None => {}
        }
        artifacts.push(entry);
        serializer_findings.extend(other);
        metadata_findings.extend(template);
    }

    // Chat templates outside GGUF.
    let matcher = policy.matcher();
    let mut template_files = Vec::new();
    for f in &files {
        let name = f
            .relative_path
            .rsplit('/')
            .next()
            .unwrap_or(&f.relative_path);
        if TEMPLATE_FILES.contains(&name) || extension_of(&f.relative_path) == "jinja" {
            match fs::read(&f.resolved) {
                Ok(bytes) => {
                    metadata_findings.extend(scan_template_file(
                        &f.relative_path,
                        &bytes,
                        &matcher,
                    ));
                    template_files.push(f.relative_path.clone());
                }
                Err(e) => findings.push(stage_error("metadata_scan", &f.relative_path, e)),
            }
        }
    }

    recs.measured(
        "packaging_policy",
        json!({
            "allowed_formats": policy.allowed_formats,
            "blocked_formats": policy.blocked_formats,
            "require_hash_match": policy.require_hash_match,
            "scan_gguf_metadata": policy.scan_gguf_metadata,
            "policy_digest": policy_digest,
            "source": req.policy_path.as_deref().map(file_name).unwrap_or_else(|| "built-in default".into()),
        }),
        "loader policy in force for this scan",
    );
    recs.measured(
        "serializer_scan",
        json!({"artifacts": artifacts, "findings": serializer_findings}),
        "static scan of every weights artifact; nothing is loaded",
    );
    recs.measured(
        "guard_results",
        serde_json::to_value(&guard_results).expect("serializes"),
        "one decision per weights artifact",
    );
    if guard_results.is_empty() {
        recs.present.remove("guard_results");
        recs.absent("guard_results", "no weights artifacts found");
    }
    let blocked: Vec<Value> = guard_results
        .iter()
        .filter(|g| g.outcome != GuardOutcome::Pass)
        .map(|g| json!({"path": g.artifact_path, "serialization": g.serialization, "outcome": g.outcome, "reason": g.reason}))
        .collect();
    recs.measured(
        "blocked_loads_log",
        json!({"events": blocked}),
        "artifacts the guard refused to pass",
    );
    recs.measured(
        "metadata_scan",
        json!({"gguf": gguf_files, "template_files": template_files, "findings": metadata_findings}),
        "GGUF metadata and chat templates matched against suspicious patterns",
    );
    recs.measured(
        "onnx_op_scan",
        json!({"graphs": onnx_graphs}),
        "operators checked against the ONNX allowlist",
    );
    findings.extend(serializer_findings.iter().cloned());
    findings.extend(metadata_findings.iter().cloned());

    // Fingerprints.
    let config_files: Vec<String> = files
        .iter()
        .filter(|f| is_config_file(&f.relative_path))
        .map(|f| f.relative_path.clone())
        .collect();
    if config_files.is_empty() {
        recs.absent("config_fingerprint", "no configuration files");
        recs.absent("family_fingerprint", "no configuration files");
    } else {
        match (
            fingerprint_config(dir, &config_files),
            fingerprint_family(dir, &config_files),
        ) {
            (Ok(c), Ok(f)) => {
                recs.measured(
                    "config_fingerprint",
                    serde_json::to_value(c).expect("serializes"),
                    "canonical JSON of config files",
                );
                recs.measured(
                    "family_fingerprint",
                    serde_json::to_value(f).expect("serializes"),
                    "family fingerprint over config files",
                );
            }
            (Err(e), _) | (_, Err(e)) => {
                findings.push(stage_error(
                    "config_fingerprint",
                    &config_files.join(","),
                    &e,
                ));
                recs.absent("config_fingerprint", e.to_string());
                recs.absent("family_fingerprint", e.to_string());
            }
        }
    }
    let tokenizer_files: Vec<String> = files
        .iter()
        .filter(|f| is_tokenizer_file(&f.relative_path))
        .map(|f| f.relative_path.clone())
        .collect();
    if tokenizer_files.is_empty() {
        recs.absent("tokenizer_fingerprint", "no tokenizer files");
    } else {
        match fingerprint_tokenizer(dir, &tokenizer_files) {
            Ok(fps) => recs.measured(
                "tokenizer_fingerprint",
                json!({"fingerprints": fps}),
                "vocab and merges digests",
            ),
            Err(e) => {
                findings.push(stage_error(
                    "tokenizer_fingerprint",
                    &tokenizer_files.join(","),
                    &e,
                ));
                recs.absent("tokenizer_fingerprint", e.to_string());
            }
        }
    }

    // Structure.
    let config: Option<Value> = by_path.get("config.json").and_then(|f| {
        let parsed = fs::read(&f.resolved)
            .map_err(|e| e.to_string())
            .and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()));
        match parsed {
            Ok(v) => Some(v),
            Err(e) => {
                findings.push(stage_error("shape_consistency", "config.json", e));
                None
            }
        }
    });
    let header_list: Vec<SafetensorsHeader> =
        headers.iter().map(|(_, _, h)| (*h).clone()).collect();
    let shape = shape_consistency(config.as_ref().unwrap_or(&Value::Null), &header_list);
    for m in shape.mismatches() {
        findings.push(
            Finding::warn(
                "structure.shape_mismatch",
                Some("3.2"),
                &m.tensor_name,
                format!(
                    "{} is {} in config but {} in tensor {}",
                    m.config_key, m.expected, m.observed, m.tensor_name
                ),
            )
            .with_evidence(serde_json::to_value(m).expect("serializes")),
        );
    }
    let mut shape_value = serde_json::to_value(&shape).expect("serializes");
    shape_value["config"] = json!(config.as_ref().map(|_| "config.json"));
    recs.measured(
        "shape_consistency_report",
        shape_value,
        "config dimensions compared with safetensors shapes",
    );

    let settings = StatsSettings {
        z_threshold: policy.tensor_stats.z_threshold,
        sample_budget: policy.tensor_stats.sample_budget,
        seed: policy.tensor_stats.seed,
    };
    let mut stats_files = BTreeMap::new();
    let mut checksum_files = BTreeMap::new();
    let mut dtype_counts: BTreeMap<String, u64> = BTreeMap::new();
    for (rel, path, header) in &headers {
        for t in header.tensors.values() {
            *dtype_counts.entry(t.dtype.to_string()).or_default() += 1;
        }
        match tensor_stats(path, header, &settings) {
            Ok(stats) => {
                for s in stats.iter().filter(|s| s.non_finite) {
                    findings.push(
                        Finding::critical(
                            "tensor.non_finite",
                            "3.1",
                            rel,
                            format!("tensor {} holds {} NaN and {} Inf values", s.name, s.nan_count, s.inf_count),
                        )
                        .with_evidence(json!({"tensor": s.name, "nan_count": s.nan_count, "inf_count": s.inf_count})),
                    );
                }
                stats_files.insert(
                    rel.to_string(),
                    serde_json::to_value(stats).expect("serializes"),
                );
            }
            Err(e) => findings.push(stage_error("tensor_stats", rel, e)),
        }
        match tensor_checksums(path, header) {
            Ok(c) => {
                checksum_files.insert(rel.to_string(), c);
            }
            Err(e) => findings.push(stage_error("tensor_checksums", rel, e)),
        }
    }
    recs.measured(
        "tensor_stats",
        json!({"files": stats_files, "settings": {"z_threshold": settings.z_threshold, "sample_budget": settings.sample_budget, "seed": settings.seed}}),
        "per-tensor statistics over validated safetensors files",
    );
    recs.measured(
        "tensor_checksums",
        json!({"files": checksum_files}),
        "SHA-256 of each tensor's byte range",
    );

    let gguf_file_types: Vec<Value> = gguf_files
        .iter()
        .filter_map(|g| {
            g["general"]
                .get("general.file_type")
                .map(|t| json!({"path": g["path"], "file_type": t}))
        })
        .collect();
    let config_quant = config
        .as_ref()
        .and_then(|c| c.get("quantization_config"))
        .cloned();
    if dtype_counts.is_empty() && gguf_file_types.is_empty() && config_quant.is_none() {
        recs.absent(
            "quantization",
            "no weights with readable precision information",
        );
    } else {
        recs.measured(
            "quantization",
            json!({"safetensors_dtypes": dtype_counts, "gguf_file_types": gguf_file_types, "config_quantization": config_quant}),
            "tensor dtypes, GGUF file types and config quantization settings",
        );
    }

    // Publisher disclosure, needed here for declared adapters.
    let (disclosure, disclosure_findings) = match by_path.get(DISCLOSURE_FILE) {
        None => (Disclosure::default(), Vec::new()),
        Some(f) => match fs::read(&f.resolved)
            .map_err(|e| e.to_string())
            .and_then(|b| parse_disclosure(&b))
        {
            Ok(d) => d,
            Err(e) => (
                Disclosure::default(),
                vec![Finding::warn(
                    "disclosure.invalid",
                    None,
                    DISCLOSURE_FILE,
                    format!("disclosure file ignored: {e}"),
                )],
            ),
        },
    };
    findings.extend(disclosure_findings);

    let declared = match disclosure.fields.get("adapters_lora") {
        None => None,
        Some(v) => match parse_declared_adapters(&serde_json::to_vec(v).expect("serializes")) {
            Ok(d) => Some(d),
            Err(e) => {
                findings.push(Finding::warn(
                    "disclosure.invalid_adapters",
                    None,
                    DISCLOSURE_FILE,
                    e.to_string(),
                ));
                None
            }
        },
    };
    match adapter_inventory_listed(&files, declared.as_deref()) {
        Ok((adapters, adapter_findings)) => {
            let hashes: Vec<Value> = adapters
                .iter()
                .map(|a| json!({"adapter_path": a.adapter_path, "config_path": a.config_path, "config_digest": a.config_digest, "weights_path": a.weights_path, "weights_digest": a.weights_digest}))
                .collect();
            recs.measured(
                "adapter_inventory",
                json!({"adapters": adapters}),
                "PEFT/LoRA adapters found by config signature",
            );
            recs.measured(
                "adapter_hashes",
                json!({"adapters": hashes}),
                "SHA-256 of adapter configs and weights",
            );
            findings.extend(adapter_findings);
        }
        Err(e) => {
            findings.push(stage_error("adapter_inventory", ".", &e));
            recs.absent("adapter_inventory", e.to_string());
            recs.absent("adapter_hashes", e.to_string());
        }
    }

    // Runtime probes.
    let probes = probe_evidence(&req.probe_logs);
    for r in probes.records {
        recs.record(r);
    }
    findings.extend(probes.findings);

    // Merge: measurements first, then publisher assertions, then explicit non-disclosure.
    let mut records = Vec::new();
    for spec in schema::SCHEMA.iter() {
        let key = spec.key;
        let disclosed = disclosure.fields.get(key);
        if let Some(rec) = recs.present.remove(key) {
            if disclosed.is_some() {
                findings.push(Finding::info(
                    "disclosure.superseded",
                    None,
                    DISCLOSURE_FILE,
                    format!("{key} was measured by the scanner; the disclosed value is not used"),
                ));
            }
            records.push(rec);
            continue;
        }
        if let Some(value) = disclosed {
            let rec = FieldRecord::asserted(
                key,
                value.clone(),
                disclosure.sources.get(key).cloned(),
                "from the publisher disclosure file",
            );
            match rec.validate() {
                Ok(_) => {
                    records.push(rec);
                    continue;
                }
                Err(e) => findings.push(Finding::warn(
                    "disclosure.invalid_value",
                    None,
                    DISCLOSURE_FILE,
                    e.to_string(),
                )),
            }
        }
        if disclosure.undisclosed.iter().any(|k| k == key) {
            records.push(FieldRecord::undisclosed(
                key,
                "declared undisclosed by the publisher",
            ));
            continue;
        }
        let notes = recs
            .absent_notes
            .remove(key)
            .unwrap_or_else(|| "not provided".into());
        records.push(FieldRecord::absent(key, default_source(key), notes));
    }

    let text = |key: &str| disclosure.asserted_str(key).map(str::to_string);
    let dir_name = fs::canonicalize(dir)
        .ok()
        .as_deref()
        .map(file_name)
        .unwrap_or_else(|| file_name(dir));
    let model_name = text("model_name").unwrap_or_else(|| dir_name.clone());
    let identity = ModelIdentity::new(
        model_name.clone(),
        text("model_id").unwrap_or(model_name),
        text("version_or_commit").unwrap_or_else(|| "unversioned".into()),
        text("license").unwrap_or_else(|| "NOASSERTION".into()),
    )
    .map_err(|e| PipelineError::Internal(e.to_string()))?;

    if let Some(b) = &baseline {
        findings.extend(baseline_drift(b, &records));
    }

    let opts = AssembleOptions {
        generated_at: Some(if req.reproducible {
            reproducible_timestamp()
        } else {
            Utc::now()
        }),
        reproducible: req.reproducible,
        signature_ref: None,
    };
    let artifact = assemble_artifact_with(identity, records, ToolInfo::current(), opts)
        .map_err(|e| PipelineError::Internal(e.to_string()))?;
    let lint = lint_requirements(&artifact, &policy);

    let mut exports = BTreeMap::new();
    for target in &req.export_targets {
        let doc = match target {
            ExportTarget::Spdx => export_spdx(&artifact, &policy, req.force_export),
            ExportTarget::Cdx => export_cdx(&artifact, &policy, req.force_export),
        };
        match doc {
            Ok(d) => {
                exports.insert(*target, d);
            }
            Err(e @ ExportError::LintBlocked(_)) => findings.push(Finding::info(
                "export.blocked",
                None,
                ".",
                format!("{target} export skipped: {e}"),
            )),
            Err(e) => return Err(PipelineError::Internal(e.to_string())),
        }
    }

    findings.sort_by(|a, b| {
        b.severity
            .cmp(&a.severity)
            .then_with(|| a.path.cmp(&b.path))
            .then_with(|| a.id.cmp(&b.id))
            .then_with(|| a.reason.cmp(&b.reason))
    });
    let exit_code = exit_code(&lint, &guard_results, &findings);
    Ok(ScanReport {
        coverage: crosswalk_report(&artifact),
        artifact,
        guard_results,
        findings,
        lint,
        probe_rows: probes.rows,
        exports,
        exit_code,
    })
}

/// Verifies a model directory against a hash manifest.
pub fn verify_directory(
    manifest_path: &Path,
    model_dir: &Path,
) -> Result<crate::integrity::VerifyReport, PipelineError> {
    let manifest =
        HashManifest::load(manifest_path).map_err(|e| PipelineError::Config(e.to_string()))?;
    let actual =
        build_manifest(model_dir, &scan_filter).map_err(|e| PipelineError::Io(e.to_string()))?;
    Ok(compare_manifests(&manifest, &actual))
}

/// Writes a hash manifest for `model_dir` to `out`.
pub fn write_manifest(model_dir: &Path, out: &Path) -> Result<HashManifest, PipelineError> {
    let manifest =
        build_manifest(model_dir, &scan_filter).map_err(|e| PipelineError::Io(e.to_string()))?;
    fs::write(out, manifest.to_json())
        .map_err(|e| PipelineError::Io(format!("{}: {e}", out.display())))?;
    Ok(manifest)
}
