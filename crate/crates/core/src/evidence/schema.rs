//! The embedded 41-field evidence schema.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Requirement level of a schema field. Serialized as `"M"`, `"S"`, `"m"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RequirementLevel {
    Must,
    Should,
    May,
}

impl RequirementLevel {
    pub fn code(self) -> &'static str {
        match self {
            RequirementLevel::Must => "M",
            RequirementLevel::Should => "S",
            RequirementLevel::May => "m",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "M" => Some(RequirementLevel::Must),
            "S" => Some(RequirementLevel::Should),
            "m" => Some(RequirementLevel::May),
            _ => None,
        }
    }
}

impl fmt::Display for RequirementLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl Serialize for RequirementLevel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for RequirementLevel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let code = String::deserialize(d)?;
        RequirementLevel::from_code(&code)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown requirement level {code:?}")))
    }
}

/// The five evidence categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    IdentityReleaseIntegrity,
    PackagingSerializationSafety,
    StructureAdapters,
    RuntimeProbes,
    EvaluationDisclosure,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::IdentityReleaseIntegrity,
        Category::PackagingSerializationSafety,
        Category::StructureAdapters,
        Category::RuntimeProbes,
        Category::EvaluationDisclosure,
    ];

    /// Leading digit of the field ids in this category.
    pub fn number(self) -> u8 {
        match self {
            Category::IdentityReleaseIntegrity => 1,
            Category::PackagingSerializationSafety => 2,
            Category::StructureAdapters => 3,
            Category::RuntimeProbes => 4,
            Category::EvaluationDisclosure => 5,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Category::ALL.into_iter().find(|c| c.number() == n)
    }

    pub fn title(self) -> &'static str {
        match self {
            Category::IdentityReleaseIntegrity => "Identity & Release Integrity",
            Category::PackagingSerializationSafety => "Packaging & Serialization Safety",
            Category::StructureAdapters => "Structure & Adapters",
            Category::RuntimeProbes => "Runtime Probes",
            Category::EvaluationDisclosure => "Evaluation & Disclosure",
        }
    }
}

/// One row of the schema table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldSpec {
    pub id: &'static str,
    pub key: &'static str,
    pub category: Category,
    pub level: RequirementLevel,
    pub description: &'static str,
}

impl FieldSpec {
    /// Sort key for dotted ids: "1.10" sorts after "1.9".
    pub fn order(&self) -> (u8, u8) {
        id_order(self.id).expect("schema ids are well-formed")
    }
}

/// Parses a dotted `major.minor` field id into a sortable pair.
pub fn id_order(id: &str) -> Option<(u8, u8)> {
    let (major, minor) = id.split_once('.')?;
    Some((major.parse().ok()?, minor.parse().ok()?))
}

use Category::*;
use RequirementLevel::*;

macro_rules! field {
    ($id:literal, $key:literal, $cat:expr, $lvl:expr, $desc:literal) => {
        FieldSpec {
            id: $id,
            key: $key,
            category: $cat,
            level: $lvl,
            description: $desc,
        }
    };
}

pub static SCHEMA: [FieldSpec; 41] = [
    field!(
        "1.1",
        "model_name",
        IdentityReleaseIntegrity,
        Must,
        "Canonical model name used in packaging/release."
    ),
    field!(
        "1.2",
        "model_id",
        IdentityReleaseIntegrity,
        Must,
        "Registry path or internal repository slug."
    ),
    field!(
        "1.3",
        "version_or_commit",
        IdentityReleaseIntegrity,
        Must,
        "Semantic version or commit hash."
    ),
    field!(
        "1.4",
        "license",
        IdentityReleaseIntegrity,
        Must,
        "License governing model weights."
    ),
    field!(
        "1.5",
        "hash_manifest",
        IdentityReleaseIntegrity,
        Must,
        "Per-file SHA-256 for shards, configs, and tokenizers."
    ),
    field!(
        "1.6",
        "signature_bundle",
        IdentityReleaseIntegrity,
        Should,
        "Cryptographic signature bundle for release."
    ),
    field!(
        "1.7",
        "dir_merkle",
        IdentityReleaseIntegrity,
        Should,
        "Directory-level Merkle root for reproducibility."
    ),
    field!(
        "1.8",
        "publisher_evidence",
        IdentityReleaseIntegrity,
        Should,
        "Publisher or organization provenance evidence."
    ),
    field!(
        "1.9",
        "config_fingerprint",
        IdentityReleaseIntegrity,
        Should,
        "Hash of configuration files."
    ),
    field!(
        "1.10",
        "family_fingerprint",
        IdentityReleaseIntegrity,
        Should,
        "Declared lineage or family fingerprint."
    ),
    field!(
        "2.1",
        "packaging_policy",
        PackagingSerializationSafety,
        Must,
        "Loader allowlist; block unsafe serializers (e.g., pickle)."
    ),
    field!(
        "2.2",
        "serializer_scan",
        PackagingSerializationSafety,
        Must,
        "Static scan for disallowed serializers or exec paths."
    ),
    field!(
        "2.3",
        "guard_results",
        PackagingSerializationSafety,
        Must,
        "Load-time enforcement outcomes with reasons."
    ),
    field!(
        "2.4",
        "file_inventory",
        PackagingSerializationSafety,
        Should,
        "Typed inventory of all package files."
    ),
    field!(
        "2.5",
        "binary_inventory",
        PackagingSerializationSafety,
        Should,
        "Inventory of native binaries (.so, .dll)."
    ),
    field!(
        "2.6",
        "allowlist_policy",
        PackagingSerializationSafety,
        Should,
        "File/extension allowlist policy."
    ),
    field!(
        "2.7",
        "blocked_loads_log",
        PackagingSerializationSafety,
        May,
        "Evidence of blocked unsafe loads."
    ),
    field!(
        "2.8",
        "metadata_scan",
        PackagingSerializationSafety,
        Should,
        "Config metadata diff for hidden templates."
    ),
    field!(
        "2.9",
        "tokenizer_fingerprint",
        PackagingSerializationSafety,
        Should,
        "Hashes for tokenizer vocab and merges."
    ),
    field!(
        "2.10",
        "onnx_op_scan",
        PackagingSerializationSafety,
        Should,
        "ONNX/custom-op allowlist and graph lint results."
    ),
    field!(
        "3.1",
        "base_model",
        StructureAdapters,
        Should,
        "Declared upstream base if finetuned/derived."
    ),
    field!(
        "3.2",
        "quantization",
        StructureAdapters,
        Should,
        "Quantization scheme and bit-width."
    ),
    field!(
        "3.3",
        "adapters_lora",
        StructureAdapters,
        Should,
        "Declared LoRA/adapters and attach points."
    ),
    field!(
        "3.4",
        "adapter_inventory",
        StructureAdapters,
        Should,
        "Enumerated attached PEFT/LoRA modules."
    ),
    field!(
        "3.5",
        "adapter_hashes",
        StructureAdapters,
        Should,
        "Checksums or signatures for each adapter."
    ),
    field!(
        "3.6",
        "shape_consistency_report",
        StructureAdapters,
        Should,
        "Comparison of config and tensor shapes."
    ),
    field!(
        "3.7",
        "tensor_checksums",
        StructureAdapters,
        Should,
        "Per-tensor checksum for drift detection."
    ),
    field!(
        "3.8",
        "tensor_stats",
        StructureAdapters,
        Should,
        "Tensor statistics (mean/var/NaN/Inf/outliers)."
    ),
    field!(
        "4.1",
        "detector_method",
        RuntimeProbes,
        Should,
        "Contamination probe method and parameters."
    ),
    field!(
        "4.2",
        "detector_outputs",
        RuntimeProbes,
        Should,
        "Probe metrics/curves (ROC/AUC, TPR@5%FPR)."
    ),
    field!(
        "4.3",
        "backdoor_probe_results",
        RuntimeProbes,
        Should,
        "Trigger sweep and attack success rates."
    ),
    field!(
        "4.4",
        "pii_probe_results",
        RuntimeProbes,
        May,
        "PII exposure and near-duplicate tests."
    ),
    field!(
        "4.5",
        "jailbreak_probe_results",
        RuntimeProbes,
        May,
        "Jailbreak evaluation results vs. baselines."
    ),
    field!(
        "4.6",
        "prompt_leak_probes",
        RuntimeProbes,
        May,
        "Prompt self-replication/extraction outcomes."
    ),
    field!(
        "4.7",
        "sanity_prompts_diff",
        RuntimeProbes,
        May,
        "Prompt drift checks for regression testing."
    ),
    field!(
        "4.8",
        "activation_probe",
        RuntimeProbes,
        May,
        "Representation-based anomaly indicators."
    ),
    field!(
        "5.1",
        "benchmark_summary",
        EvaluationDisclosure,
        Should,
        "Compact summary of evaluation results."
    ),
    field!(
        "5.2",
        "eval_datasets",
        EvaluationDisclosure,
        Should,
        "Benchmarks used for evaluation (not training)."
    ),
    field!(
        "5.3",
        "metrics",
        EvaluationDisclosure,
        Should,
        "Reported metrics (accuracy, pass@k, etc.)."
    ),
    field!(
        "5.4",
        "eval_params",
        EvaluationDisclosure,
        May,
        "Evaluation configuration (shots, temperature)."
    ),
    field!(
        "5.5",
        "training_data_cutoff",
        EvaluationDisclosure,
        May,
        "Declared training data cutoff date."
    ),
];

pub fn by_key(key: &str) -> Option<&'static FieldSpec> {
    SCHEMA.iter().find(|f| f.key == key)
}

pub fn by_id(id: &str) -> Option<&'static FieldSpec> {
    SCHEMA.iter().find(|f| f.id == id)
}

pub fn fields_at(level: RequirementLevel) -> impl Iterator<Item = &'static FieldSpec> {
    SCHEMA.iter().filter(move |f| f.level == level)
}
