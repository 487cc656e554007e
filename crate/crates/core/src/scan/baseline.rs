//! Drift between a baseline evidence artifact and the current scan. Every
//! difference is an Info finding; drift is reported, never scored.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use crate::evidence::{EvidenceArtifact, FieldRecord};
use crate::packaging::Finding;

fn present<'a>(records: &'a [FieldRecord], key: &str) -> Option<&'a Value> {
    records
        .iter()
        .find(|r| r.key == key && r.is_present())
        .map(|r| &r.value)
}

fn manifest_map(v: &Value) -> BTreeMap<&str, &str> {
    v["entries"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|e| Some((e["path"].as_str()?, e["sha256"].as_str()?)))
        .collect()
}

fn drift(id: &str, threat: Option<&str>, path: &str, reason: String, evidence: Value) -> Finding {
    Finding::info(id, threat, path, reason).with_evidence(evidence)
}

pub fn baseline_drift(baseline: &EvidenceArtifact, current: &[FieldRecord]) -> Vec<Finding> {
    let mut out = Vec::new();
    let before = |key: &str| baseline.present(key).map(|r| &r.value);
    let after = |key: &str| present(current, key);

    if let (Some(b), Some(a)) = (before("hash_manifest"), after("hash_manifest")) {
        let (b, a) = (manifest_map(b), manifest_map(a));
        for (path, sha) in &a {
            match b.get(path) {
                None => out.push(drift(
                    "drift.file_added",
                    None,
                    path,
                    format!("{path} is new since the baseline"),
                    json!({"sha256": sha}),
                )),
                Some(old) if old != sha => out.push(drift(
                    "drift.file_changed",
                    Some("4.1"),
                    path,
                    format!("{path} changed since the baseline"),
                    json!({"baseline": old, "current": sha}),
                )),
                _ => {}
            }
        }
        for (path, sha) in b.iter().filter(|(p, _)| !a.contains_key(*p)) {
            out.push(drift(
                "drift.file_removed",
                None,
                path,
                format!("{path} was removed since the baseline"),
                json!({"sha256": sha}),
            ));
        }
    }

    for (key, pointer, threat) in [
        ("dir_merkle", "/root", None),
        ("config_fingerprint", "/sha256", Some("3.2")),
        ("family_fingerprint", "/sha256", Some("4.2")),
    ] {
        let b = before(key).and_then(|v| v.pointer(pointer));
        let a = after(key).and_then(|v| v.pointer(pointer));
        if let (Some(b), Some(a)) = (b, a) {
            if a != b {
                out.push(drift(
                    &format!("drift.{key}"),
                    threat,
                    ".",
                    format!("{key} differs from the baseline"),
                    json!({"baseline": b, "current": a}),
                ));
            }
        }
    }

    if let (Some(b), Some(a)) = (
        before("tokenizer_fingerprint"),
        after("tokenizer_fingerprint"),
    ) {
        let digests = |v: &Value| -> BTreeSet<String> {
            v["fingerprints"]
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(|f| f["sha256"].as_str().map(str::to_string))
                .collect()
        };
        if digests(a) != digests(b) {
            out.push(drift(
                "drift.tokenizer_fingerprint",
                Some("5.2"),
                ".",
                "tokenizer fingerprints differ from the baseline".into(),
                json!({"baseline": b["fingerprints"], "current": a["fingerprints"]}),
            ));
        }
    }

    if let (Some(b), Some(a)) = (before("tensor_checksums"), after("tensor_checksums")) {
        if let (Some(bf), Some(af)) = (b["files"].as_object(), a["files"].as_object()) {
            for (file, tensors) in af {
                let Some(old) = bf.get(file).and_then(Value::as_object) else {
                    continue;
                };
                let Some(new) = tensors.as_object() else {
                    continue;
                };
                let changed: Vec<&String> = new
                    .iter()
                    .filter(|(n, d)| old.get(*n).is_some_and(|o| o != *d))
                    .map(|(n, _)| n)
                    .collect();
                if !changed.is_empty() {
                    out.push(drift(
                        "drift.tensor_checksum",
                        Some("3.1"),
                        file,
                        format!(
                            "{} tensor(s) in {file} changed since the baseline",
                            changed.len()
                        ),
                        json!({"tensors": changed}),
                    ));
                }
            }
        }
    }
    out
}
