use std::collections::HashSet;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::schema::{self, Category, FieldSpec, RequirementLevel};
use super::EvidenceError;
use crate::canonical::{sha256_hex, to_canonical_bytes};

pub const SCHEMA_VERSION: &str = "airs-evidence/1";

/// Where a field value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceType {
    MeasuredByScanner,
    PublisherAssertion,
    ThirdParty,
    Undisclosed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    High,
    Medium,
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiabilityBlock {
    pub source_type: SourceType,
    pub url: Option<String>,
    pub confidence: Confidence,
    pub notes: String,
}

impl VerifiabilityBlock {
    pub fn measured(notes: impl Into<String>) -> Self {
        VerifiabilityBlock {
            source_type: SourceType::MeasuredByScanner,
            url: None,
            confidence: Confidence::High,
            notes: notes.into(),
        }
    }

    pub fn asserted(url: Option<String>, notes: impl Into<String>) -> Self {
        VerifiabilityBlock {
            source_type: SourceType::PublisherAssertion,
            url,
            confidence: Confidence::Medium,
            notes: notes.into(),
        }
    }

    pub fn third_party(
        url: Option<String>,
        confidence: Confidence,
        notes: impl Into<String>,
    ) -> Self {
        VerifiabilityBlock {
            source_type: SourceType::ThirdParty,
            url,
            confidence,
            notes: notes.into(),
        }
    }

    pub fn undisclosed(notes: impl Into<String>) -> Self {
        VerifiabilityBlock {
            source_type: SourceType::Undisclosed,
            url: None,
            confidence: Confidence::Low,
            notes: notes.into(),
        }
    }

    fn check(&self) -> Result<(), String> {
        if self.source_type == SourceType::MeasuredByScanner && self.confidence != Confidence::High
        {
            return Err("scanner-measured evidence must carry high confidence".into());
        }
        if self.source_type == SourceType::Undisclosed
            && self.url.as_deref().is_some_and(|u| !u.is_empty())
        {
            return Err("undisclosed evidence cannot carry a url".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldStatus {
    Present,
    UndisclosedByPublisher,
    Absent,
}

/// One evidence field bound to its schema row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub field_id: String,
    pub key: String,
    pub category: Category,
    pub level: RequirementLevel,
    pub value: Value,
    pub verifiability: VerifiabilityBlock,
    pub status: FieldStatus,
}

impl FieldRecord {
    /// Builds a record for schema field `key`. Panics on a key outside the schema,
    /// which is a programming error for the built-in constructors.
    fn for_key(
        key: &str,
        value: Value,
        verifiability: VerifiabilityBlock,
        status: FieldStatus,
    ) -> Self {
        let spec = schema::by_key(key).unwrap_or_else(|| panic!("{key} is not a schema field"));
        Self::from_spec(spec, value, verifiability, status)
    }

    fn from_spec(
        spec: &FieldSpec,
        value: Value,
        verifiability: VerifiabilityBlock,
        status: FieldStatus,
    ) -> Self {
        FieldRecord {
            field_id: spec.id.to_string(),
            key: spec.key.to_string(),
            category: spec.category,
            level: spec.level,
            value,
            verifiability,
            status,
        }
    }

    pub fn measured(key: &str, value: Value, notes: impl Into<String>) -> Self {
        Self::for_key(
            key,
            value,
            VerifiabilityBlock::measured(notes),
            FieldStatus::Present,
        )
    }

    pub fn asserted(
        key: &str,
        value: Value,
        url: Option<String>,
        notes: impl Into<String>,
    ) -> Self {
        Self::for_key(
            key,
            value,
            VerifiabilityBlock::asserted(url, notes),
            FieldStatus::Present,
        )
    }

    pub fn with_verifiability(key: &str, value: Value, verifiability: VerifiabilityBlock) -> Self {
        Self::for_key(key, value, verifiability, FieldStatus::Present)
    }

    pub fn undisclosed(key: &str, notes: impl Into<String>) -> Self {
        Self::for_key(
            key,
            Value::Null,
            VerifiabilityBlock::undisclosed(notes),
            FieldStatus::UndisclosedByPublisher,
        )
    }

    /// A field this scan did not produce. `source` says who would have produced it.
    pub fn absent(key: &str, source: SourceType, notes: impl Into<String>) -> Self {
        let verifiability = VerifiabilityBlock {
            source_type: source,
            url: None,
            confidence: if source == SourceType::MeasuredByScanner {
                Confidence::High
            } else {
                Confidence::Low
            },
            notes: notes.into(),
        };
        Self::for_key(key, Value::Null, verifiability, FieldStatus::Absent)
    }

    pub fn is_present(&self) -> bool {
        self.status == FieldStatus::Present
    }

    /// Checks the record against its schema row and the status/verifiability rules.
    pub fn validate(&self) -> Result<&'static FieldSpec, EvidenceError> {
        let spec = schema::by_key(&self.key)
            .ok_or_else(|| EvidenceError::UnknownField(self.key.clone()))?;
        let bad = |reason: String| EvidenceError::InvalidRecord {
            key: self.key.clone(),
            reason,
        };
        if spec.id != self.field_id {
            return Err(bad(format!(
                "field_id {} does not match schema id {}",
                self.field_id, spec.id
            )));
        }
        if spec.category != self.category {
            return Err(bad(format!(
                "category {:?} inconsistent with field id {}",
                self.category, spec.id
            )));
        }
        if spec.level != self.level {
            return Err(bad(format!(
                "level {} differs from schema level {}",
                self.level, spec.level
            )));
        }
        self.verifiability.check().map_err(bad)?;
        match self.status {
            FieldStatus::Present if value_is_empty(&self.value) => {
                Err(bad("present record has an empty value".into()))
            }
            FieldStatus::UndisclosedByPublisher
                if self.verifiability.source_type != SourceType::Undisclosed =>
            {
                Err(bad(
                    "undisclosed record must use source_type undisclosed".into()
                ))
            }
            _ => Ok(spec),
        }
    }
}

fn value_is_empty(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::String(s) => s.is_empty(),
        Value::Array(a) => a.is_empty(),
        Value::Object(o) => o.is_empty(),
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelIdentity {
    pub model_name: String,
    pub model_id: String,
    pub version_or_commit: String,
    pub license: String,
}

impl ModelIdentity {
    pub fn new(
        model_name: impl Into<String>,
        model_id: impl Into<String>,
        version_or_commit: impl Into<String>,
        license: impl Into<String>,
    ) -> Result<Self, EvidenceError> {
        let id = ModelIdentity {
            model_name: model_name.into(),
            model_id: model_id.into(),
            version_or_commit: version_or_commit.into(),
            license: license.into(),
        };
        id.check()?;
        Ok(id)
    }

    fn check(&self) -> Result<(), EvidenceError> {
        for (name, v) in [
            ("model_name", &self.model_name),
            ("model_id", &self.model_id),
            ("version_or_commit", &self.version_or_commit),
        ] {
            if v.trim().is_empty() {
                return Err(EvidenceError::InvalidIdentity(format!("{name} is empty")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
    /// When set, `generated_at` is outside the digested region.
    #[serde(default)]
    pub reproducible: bool,
}

impl ToolInfo {
    pub fn current() -> Self {
        ToolInfo {
            name: "airscan".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            reproducible: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AssembleOptions {
    /// Defaults to the current time.
    pub generated_at: Option<DateTime<Utc>>,
    pub reproducible: bool,
    pub signature_ref: Option<String>,
}

/// The evidence document. Construct through [`assemble_artifact`] or
/// [`EvidenceArtifact::from_json`]; both guarantee a valid digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceArtifact {
    schema_version: String,
    subject: ModelIdentity,
    fields: Vec<FieldRecord>,
    #[serde(with = "utc_seconds")]
    generated_at: DateTime<Utc>,
    tool_info: ToolInfo,
    canonical_digest: String,
    signature_ref: Option<String>,
}

impl EvidenceArtifact {
    pub fn schema_version(&self) -> &str {
        &self.schema_version
    }
    pub fn subject(&self) -> &ModelIdentity {
        &self.subject
    }
    pub fn fields(&self) -> &[FieldRecord] {
        &self.fields
    }
    pub fn generated_at(&self) -> DateTime<Utc> {
        self.generated_at
    }
    pub fn tool_info(&self) -> &ToolInfo {
        &self.tool_info
    }
    pub fn canonical_digest(&self) -> &str {
        &self.canonical_digest
    }
    pub fn signature_ref(&self) -> Option<&str> {
        self.signature_ref.as_deref()
    }

    pub fn field(&self, key: &str) -> Option<&FieldRecord> {
        self.fields.iter().find(|f| f.key == key)
    }

    /// The record for `key` when its status is Present.
    pub fn present(&self, key: &str) -> Option<&FieldRecord> {
        self.field(key).filter(|f| f.is_present())
    }

    /// Full serialized form, including digest and signature reference, in canonical encoding.
    pub fn to_canonical_json(&self) -> Vec<u8> {
        to_canonical_bytes(&serde_json::to_value(self).expect("artifact serializes"))
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    /// Parses a serialized artifact, re-validating every record and the digest.
    pub fn from_json(bytes: &[u8]) -> Result<Self, EvidenceError> {
        let artifact: EvidenceArtifact = serde_json::from_slice(bytes)?;
        artifact.subject.check()?;
        let mut seen = HashSet::new();
        for rec in &artifact.fields {
            rec.validate()?;
            if !seen.insert(rec.key.as_str()) {
                return Err(EvidenceError::DuplicateField(rec.key.clone()));
            }
        }
        artifact.verify_digest()?;
        Ok(artifact)
    }

    pub fn verify_digest(&self) -> Result<(), EvidenceError> {
        let actual = sha256_hex(&canonicalize(self));
        if actual != self.canonical_digest {
            return Err(EvidenceError::DigestMismatch {
                expected: self.canonical_digest.clone(),
                actual,
            });
        }
        Ok(())
    }

    /// Attaches a detached-signature reference. The reference sits outside the
    /// digested region, so the digest is unchanged.
    pub fn with_signature_ref(mut self, signature_ref: impl Into<String>) -> Self {
        self.signature_ref = Some(signature_ref.into());
        self
    }
}

/// Assembles an artifact stamped with the current time.
pub fn assemble_artifact(
    identity: ModelIdentity,
    records: Vec<FieldRecord>,
    tool: ToolInfo,
) -> Result<EvidenceArtifact, EvidenceError> {
    assemble_artifact_with(identity, records, tool, AssembleOptions::default())
}

pub fn assemble_artifact_with(
    identity: ModelIdentity,
    mut records: Vec<FieldRecord>,
    mut tool: ToolInfo,
    opts: AssembleOptions,
) -> Result<EvidenceArtifact, EvidenceError> {
    identity.check()?;
    let mut seen = HashSet::new();
    for rec in &records {
        rec.validate()?;
        if !seen.insert(rec.key.clone()) {
            return Err(EvidenceError::DuplicateField(rec.key.clone()));
        }
    }
    records.sort_by_key(|r| schema::id_order(&r.field_id));
    tool.reproducible = opts.reproducible;
    let generated_at = opts.generated_at.unwrap_or_else(Utc::now);
    let mut artifact = EvidenceArtifact {
        schema_version: SCHEMA_VERSION.to_string(),
        subject: identity,
        fields: records,
        generated_at: truncate_to_seconds(generated_at),
        tool_info: tool,
        canonical_digest: String::new(),
        signature_ref: opts.signature_ref,
    };
    artifact.canonical_digest = sha256_hex(&canonicalize(&artifact));
    Ok(artifact)
}

/// Canonical bytes of the digested region: everything except `canonical_digest`
/// and `signature_ref`, and except `generated_at` in reproducible mode.
pub fn canonicalize(artifact: &EvidenceArtifact) -> Vec<u8> {
    let mut value = serde_json::to_value(artifact).expect("artifact serializes");
    let obj = value.as_object_mut().expect("artifact is an object");
    obj.remove("canonical_digest");
    obj.remove("signature_ref");
    if artifact.tool_info.reproducible {
        obj.remove("generated_at");
    }
    to_canonical_bytes(&value)
}

fn truncate_to_seconds(t: DateTime<Utc>) -> DateTime<Utc> {
    Utc.timestamp_opt(t.timestamp(), 0).single().unwrap_or(t)
}

mod utc_seconds {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn identity() -> ModelIdentity {
        ModelIdentity::new("demo", "org/demo", "v1.0.0", "Apache-2.0").unwrap()
    }

    fn pinned(reproducible: bool) -> AssembleOptions {
        AssembleOptions {
            generated_at: Some(Utc.with_ymd_and_hms(2025, 10, 1, 12, 0, 0).unwrap()),
            reproducible,
            signature_ref: None,
        }
    }

    #[test]
    fn empty_records_digest_is_stable() {
        let a =
            assemble_artifact_with(identity(), vec![], ToolInfo::current(), pinned(false)).unwrap();
        let b =
            assemble_artifact_with(identity(), vec![], ToolInfo::current(), pinned(false)).unwrap();
        assert!(a.fields().is_empty());
        assert_eq!(a.canonical_digest(), b.canonical_digest());
        assert_eq!(canonicalize(&a), canonicalize(&b));
    }

    #[test]
    fn duplicate_key_rejected() {
        let recs = vec![
            FieldRecord::measured("hash_manifest", json!([1]), ""),
            FieldRecord::measured("hash_manifest", json!([2]), ""),
        ];
        let err = assemble_artifact(identity(), recs, ToolInfo::current()).unwrap_err();
        assert!(matches!(err, EvidenceError::DuplicateField(k) if k == "hash_manifest"));
    }

    #[test]
    fn unknown_key_rejected() {
        let mut rec = FieldRecord::measured("hash_manifest", json!([1]), "");
        rec.key = "weights_vibes".into();
        let err = assemble_artifact(identity(), vec![rec], ToolInfo::current()).unwrap_err();
        assert!(matches!(err, EvidenceError::UnknownField(k) if k == "weights_vibes"));
    }

    #[test]
    fn mismatched_id_or_category_rejected() {
        let mut rec = FieldRecord::measured("hash_manifest", json!([1]), "");
        rec.field_id = "1.6".into();
        assert!(matches!(
            rec.validate(),
            Err(EvidenceError::InvalidRecord { .. })
        ));
        let mut rec = FieldRecord::measured("hash_manifest", json!([1]), "");
        rec.category = Category::RuntimeProbes;
        assert!(matches!(
            rec.validate(),
            Err(EvidenceError::InvalidRecord { .. })
        ));
    }

    #[test]
    fn present_requires_value() {
        let rec = FieldRecord::measured("hash_manifest", json!({}), "");
        assert!(matches!(
            rec.validate(),
            Err(EvidenceError::InvalidRecord { .. })
        ));
    }

    #[test]
    fn verifiability_rules() {
        let mut rec = FieldRecord::measured("dir_merkle", json!({"root": "x"}), "");
        rec.verifiability.confidence = Confidence::Low;
        assert!(rec.validate().is_err());
        let mut rec = FieldRecord::undisclosed("base_model", "");
        rec.verifiability.url = Some("https://example.org".into());
        assert!(rec.validate().is_err());
    }

    #[test]
    fn records_sorted_by_numeric_id() {
        let recs = vec![
            FieldRecord::measured("family_fingerprint", json!("a"), ""),
            FieldRecord::measured("config_fingerprint", json!("b"), ""),
            FieldRecord::measured("hash_manifest", json!([1]), ""),
        ];
        let a = assemble_artifact(identity(), recs, ToolInfo::current()).unwrap();
        let ids: Vec<&str> = a.fields().iter().map(|f| f.field_id.as_str()).collect();
        assert_eq!(ids, ["1.5", "1.9", "1.10"]);
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let r1 = FieldRecord::measured("hash_manifest", json!([{"a": 1, "b": 2}]), "");
        let r2 = FieldRecord::asserted("license", json!("MIT"), None, "");
        let a = assemble_artifact_with(
            identity(),
            vec![r1.clone(), r2.clone()],
            ToolInfo::current(),
            pinned(false),
        )
        .unwrap();
        let b =
            assemble_artifact_with(identity(), vec![r2, r1], ToolInfo::current(), pinned(false))
                .unwrap();
        assert_eq!(canonicalize(&a), canonicalize(&b));
        assert_eq!(a.to_canonical_json(), b.to_canonical_json());
    }

    #[test]
    fn changed_value_changes_digest() {
        let a = assemble_artifact_with(
            identity(),
            vec![FieldRecord::asserted("license", json!("MIT"), None, "")],
            ToolInfo::current(),
            pinned(false),
        )
        .unwrap();
        let b = assemble_artifact_with(
            identity(),
            vec![FieldRecord::asserted(
                "license",
                json!("Apache-2.0"),
                None,
                "",
            )],
            ToolInfo::current(),
            pinned(false),
        )
        .unwrap();
        assert_ne!(a.canonical_digest(), b.canonical_digest());
    }

    #[test]
    fn timestamp_digested_unless_reproducible() {
        let mut later = pinned(false);
        later.generated_at = Some(Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap());
        let a =
            assemble_artifact_with(identity(), vec![], ToolInfo::current(), pinned(false)).unwrap();
        let b =
            assemble_artifact_with(identity(), vec![], ToolInfo::current(), later.clone()).unwrap();
        assert_ne!(a.canonical_digest(), b.canonical_digest());

        later.reproducible = true;
        let c =
            assemble_artifact_with(identity(), vec![], ToolInfo::current(), pinned(true)).unwrap();
        let d = assemble_artifact_with(identity(), vec![], ToolInfo::current(), later).unwrap();
        assert_eq!(c.canonical_digest(), d.canonical_digest());
    }

    #[test]
    fn json_round_trip_verifies_digest() {
        let a = assemble_artifact_with(
            identity(),
            vec![FieldRecord::measured(
                "dir_merkle",
                json!({"root": "ab", "leaf_count": 2}),
                "",
            )],
            ToolInfo::current(),
            pinned(false),
        )
        .unwrap()
        .with_signature_ref("release.sig");
        let bytes = a.to_canonical_json();
        let b = EvidenceArtifact::from_json(&bytes).unwrap();
        assert_eq!(a, b);

        let tampered = String::from_utf8(bytes)
            .unwrap()
            .replace("\"ab\"", "\"cd\"");
        assert!(matches!(
            EvidenceArtifact::from_json(tampered.as_bytes()),
            Err(EvidenceError::DigestMismatch { .. })
        ));
    }

    #[test]
    fn top_level_keys() {
        let a = assemble_artifact(identity(), vec![], ToolInfo::current()).unwrap();
        let v = serde_json::to_value(&a).unwrap();
        let mut keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "canonical_digest",
                "fields",
                "generated_at",
                "schema_version",
                "signature_ref",
                "subject",
                "tool_info"
            ]
        );
    }

    #[test]
    fn identity_rejects_empty() {
        assert!(ModelIdentity::new("", "x", "1", "MIT").is_err());
        assert!(ModelIdentity::new("x", "x", " ", "MIT").is_err());
        assert!(ModelIdentity::new("x", "x", "1", "").is_ok());
    }
}
