use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::ScanError;
use crate::canonical::{canonical_bytes_of, sha256_hex};
use crate::evidence::schema;

pub const DEFAULT_POLICY_JSON: &str = include_str!("../../data/default.airs-policy.json");

/// Serialization formats the loader guard reasons about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SerializationFormat {
    Safetensors,
    Gguf,
    Onnx,
    Pickle,
}

impl fmt::Display for SerializationFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SerializationFormat::Safetensors => "safetensors",
            SerializationFormat::Gguf => "gguf",
            SerializationFormat::Onnx => "onnx",
            SerializationFormat::Pickle => "pickle",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorStatsSettings {
    pub z_threshold: f64,
    pub sample_budget: usize,
    pub seed: u64,
}

impl Default for TensorStatsSettings {
    fn default() -> Self {
        TensorStatsSettings {
            z_threshold: 6.0,
            sample_budget: 1_000_000,
            seed: 0,
        }
    }
}

fn default_true() -> bool {
    true
}

/// Loader, serializer and extension policy. The shipped default lives in
/// `data/default.airs-policy.json`; operators supply their own `.airs-policy.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub allowed_formats: BTreeSet<SerializationFormat>,
    pub blocked_formats: BTreeSet<SerializationFormat>,
    /// Lowercase extensions without the dot; `""` admits files without an extension.
    pub extension_allowlist: BTreeSet<String>,
    pub allowed_onnx_ops: BTreeSet<String>,
    /// Case-insensitive literals, or regexes when prefixed with `re:`.
    pub suspicious_template_patterns: Vec<String>,
    pub require_hash_match: bool,
    #[serde(default = "default_true")]
    pub scan_gguf_metadata: bool,
    /// Field ids linted as Must in addition to the schema's Must fields.
    #[serde(default)]
    pub required_fields: Vec<String>,
    #[serde(default)]
    pub tensor_stats: TensorStatsSettings,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_POLICY_JSON).expect("shipped default policy parses")
    }
}

impl PolicyConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, ScanError> {
        let policy: PolicyConfig =
            serde_json::from_slice(bytes).map_err(|e| ScanError::InvalidPolicy(e.to_string()))?;
        policy.validate()?;
        Ok(policy)
    }

    pub fn load(path: &Path) -> Result<Self, ScanError> {
        let bytes = fs::read(path).map_err(|e| ScanError::io(path, e))?;
        Self::from_json(&bytes)
    }

    pub fn validate(&self) -> Result<(), ScanError> {
        let overlap: Vec<String> = self
            .allowed_formats
            .intersection(&self.blocked_formats)
            .map(|f| f.to_string())
            .collect();
        if !overlap.is_empty() {
            return Err(ScanError::InvalidPolicy(format!(
                "formats both allowed and blocked: {}",
                overlap.join(", ")
            )));
        }
        if self.scan_gguf_metadata && self.suspicious_template_patterns.is_empty() {
            return Err(ScanError::InvalidPolicy(
                "suspicious_template_patterns must be non-empty when GGUF scanning is enabled"
                    .into(),
            ));
        }
        TemplateMatcher::new(&self.suspicious_template_patterns)?;
        if let Some(bad) = self
            .required_fields
            .iter()
            .find(|id| schema::by_id(id).is_none())
        {
            return Err(ScanError::InvalidPolicy(format!(
                "required field {bad} is not in the schema"
            )));
        }
        // NaN thresholds fail this check too.
        if self.tensor_stats.z_threshold.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || self.tensor_stats.sample_budget == 0
        {
            return Err(ScanError::InvalidPolicy(
                "tensor_stats needs z_threshold > 0 and sample_budget > 0".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical policy encoding; binds guard results to this exact policy.
    pub fn digest(&self) -> String {
        sha256_hex(&canonical_bytes_of(self).expect("policy serializes"))
    }

    pub fn extension_allowed(&self, rel_path: &str) -> bool {
        self.extension_allowlist.contains(&extension_of(rel_path))
    }

    pub fn matcher(&self) -> TemplateMatcher {
        TemplateMatcher::new(&self.suspicious_template_patterns)
            .expect("validated patterns compile")
    }
}

/// Lowercased extension of the final path component, `""` when there is none.
pub fn extension_of(rel_path: &str) -> String {
    let name = rel_path.rsplit('/').next().unwrap_or(rel_path);
    match name.rfind('.') {
        Some(i) => name[i + 1..].to_ascii_lowercase(),
        None => String::new(),
    }
}

/// Compiled suspicious-template patterns.
#[derive(Debug, Clone)]
pub struct TemplateMatcher {
    patterns: Vec<(String, Regex)>,
}

impl TemplateMatcher {
    pub fn new(patterns: &[String]) -> Result<Self, ScanError> {
        let compiled = patterns
            .iter()
            .map(|p| {
                let re = match p.strip_prefix("re:") {
                    Some(src) => Regex::new(src),
                    None => RegexBuilder::new(&regex::escape(p))
                        .case_insensitive(true)
                        .build(),
                };
                re.map(|r| (p.clone(), r)).map_err(|e| {
                    ScanError::InvalidPolicy(format!("pattern {p:?} does not compile: {e}"))
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(TemplateMatcher { patterns: compiled })
    }

    /// Every pattern that matches `text`, with the matched excerpt.
    pub fn matches<'a>(&'a self, text: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.patterns
            .iter()
            .filter_map(move |(src, re)| re.find(text).map(|m| (src.as_str(), m.as_str())))
    }
}
