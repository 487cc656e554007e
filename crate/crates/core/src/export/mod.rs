//! SBOM-shaped exports of an evidence artifact.
//!
//! Fields with a native counterpart in the target format are written there;
//! every other Present field is kept under the `airs:` namespace so that
//! [`recover_spdx_fields`] and [`recover_cdx_fields`] can rebuild the full set.
//! The documents are shaped after SPDX 3.0 and CycloneDX 1.6 but are not
//! validated against either official schema.

mod cdx;
mod spdx;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::canonical::to_canonical_bytes;
use crate::evidence::{lint_requirements, schema, EvidenceArtifact, LintVerdict};
use crate::packaging::PolicyConfig;

pub use cdx::{export_cdx, recover_cdx_fields};
pub use spdx::{export_spdx, recover_spdx_fields};

pub const CROSSWALK_JSON: &str = include_str!("../../data/crosswalk.json");

/// Namespace for fields without a native landing zone.
pub const AIRS_PREFIX: &str = "airs:";
/// Namespace for exporter bookkeeping (disclaimer, force flag, native key list).
pub const META_PREFIX: &str = "airs-meta:";

pub const DISCLAIMER: &str = "Generated by airscan. This document is shaped after the target SBOM \
format to carry AIRS evidence; it is not a certified conformant document. Fields without a native \
counterpart are preserved under the airs: namespace.";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("export blocked: Must fields missing ({}); pass force to export anyway", .0.join(", "))]
    LintBlocked(Vec<String>),
    #[error("malformed export document: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrosswalkRow {
    pub field_id: String,
    pub key: String,
    pub spdx_covered: bool,
    pub cdx_covered: bool,
    pub target_hint: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrosswalkMap {
    rows: Vec<CrosswalkRow>,
}

impl Default for CrosswalkMap {
    fn default() -> Self {
        let rows: Vec<CrosswalkRow> =
            serde_json::from_str(CROSSWALK_JSON).expect("shipped crosswalk parses");
        debug_assert!(rows
            .iter()
            .all(|r| schema::by_id(&r.field_id).is_some_and(|s| s.key == r.key)));
        CrosswalkMap { rows }
    }
}

impl CrosswalkMap {
    pub fn rows(&self) -> &[CrosswalkRow] {
        &self.rows
    }

    pub fn row(&self, key: &str) -> Option<&CrosswalkRow> {
        self.rows.iter().find(|r| r.key == key)
    }

    /// Schema fields outside the table have no counterpart in either format.
    pub fn spdx_covered(&self, key: &str) -> bool {
        self.row(key).is_some_and(|r| r.spdx_covered)
    }

    pub fn cdx_covered(&self, key: &str) -> bool {
        self.row(key).is_some_and(|r| r.cdx_covered)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub mapped_spdx: usize,
    pub mapped_cdx: usize,
    /// Present fields with no counterpart in either format, in schema order.
    pub annotated_unique: Vec<String>,
}

/// Counts Present fields per the crosswalk's coverage columns.
pub fn crosswalk_report(artifact: &EvidenceArtifact) -> CoverageReport {
    let map = CrosswalkMap::default();
    let present: Vec<&str> = artifact
        .fields()
        .iter()
        .filter(|f| f.is_present())
        .map(|f| f.key.as_str())
        .collect();
    CoverageReport {
        mapped_spdx: present.iter().filter(|k| map.spdx_covered(k)).count(),
        mapped_cdx: present.iter().filter(|k| map.cdx_covered(k)).count(),
        annotated_unique: present
            .iter()
            .filter(|k| !map.spdx_covered(k) && !map.cdx_covered(k))
            .map(|k| k.to_string())
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportBundle {
    pub spdx_doc: Value,
    pub cdx_doc: Value,
    pub coverage_report: CoverageReport,
}

pub fn export_bundle(
    artifact: &EvidenceArtifact,
    policy: &PolicyConfig,
    force: bool,
) -> Result<ExportBundle, ExportError> {
    Ok(ExportBundle {
        spdx_doc: export_spdx(artifact, policy, force)?,
        cdx_doc: export_cdx(artifact, policy, force)?,
        coverage_report: crosswalk_report(artifact),
    })
}

/// Refuses export of an artifact failing Must lint unless forced.
fn check_lint(
    artifact: &EvidenceArtifact,
    policy: &PolicyConfig,
    force: bool,
) -> Result<(), ExportError> {
    let lint = lint_requirements(artifact, policy);
    if lint.verdict == LintVerdict::FailMust && !force {
        return Err(ExportError::LintBlocked(lint.missing_must));
    }
    Ok(())
}

fn present_fields(artifact: &EvidenceArtifact) -> impl Iterator<Item = (&str, &Value)> {
    artifact
        .fields()
        .iter()
        .filter(|f| f.is_present())
        .map(|f| (f.key.as_str(), &f.value))
}

fn compact(value: &Value) -> String {
    String::from_utf8(to_canonical_bytes(value)).expect("canonical JSON is UTF-8")
}

fn parse_compact(text: &str, what: &str) -> Result<Value, ExportError> {
    serde_json::from_str(text).map_err(|e| ExportError::Malformed(format!("{what}: {e}")))
}

/// Turns the native key list written under `airs-meta:native` back into keys.
fn split_native(list: &str) -> Vec<String> {
    list.split(',')
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn insert_once(
    out: &mut BTreeMap<String, Value>,
    key: String,
    value: Value,
) -> Result<(), ExportError> {
    if out.insert(key.clone(), value).is_some() {
        return Err(ExportError::Malformed(format!(
            "field {key} appears more than once"
        )));
    }
    Ok(())
}
