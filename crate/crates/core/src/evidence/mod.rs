//! Evidence schema, artifact assembly, canonical digesting and requirement linting.

mod artifact;
mod lint;
pub mod schema;

use thiserror::Error;

pub use artifact::{
    assemble_artifact, assemble_artifact_with, canonicalize, AssembleOptions, Confidence,
    EvidenceArtifact, FieldRecord, FieldStatus, ModelIdentity, SourceType, ToolInfo,
    VerifiabilityBlock, SCHEMA_VERSION,
};
pub use lint::{lint_requirements, LintReport, LintVerdict};
pub use schema::{Category, FieldSpec, RequirementLevel, SCHEMA};

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("duplicate evidence field {0}")]
    DuplicateField(String),
    #[error("unknown evidence field {0}")]
    UnknownField(String),
    #[error("invalid record for {key}: {reason}")]
    InvalidRecord { key: String, reason: String },
    #[error("invalid model identity: {0}")]
    InvalidIdentity(String),
    #[error("canonical digest mismatch: recorded {expected}, recomputed {actual}")]
    DigestMismatch { expected: String, actual: String },
    #[error("malformed artifact: {0}")]
    Json(#[from] serde_json::Error),
}
