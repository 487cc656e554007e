use serde::{Deserialize, Serialize};

use super::artifact::{EvidenceArtifact, FieldStatus};
use super::schema::{RequirementLevel, SCHEMA};
use crate::packaging::PolicyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LintVerdict {
    Pass,
    FailMust,
    WarnShould,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintReport {
    pub missing_must: Vec<String>,
    pub missing_should: Vec<String>,
    /// Should fields the publisher did not disclose. Informational; never affects the verdict.
    pub undisclosed_should: Vec<String>,
    pub verdict: LintVerdict,
}

/// Lints an artifact against the schema's requirement levels. Fields listed in
/// `policy.required_fields` are treated as Must regardless of their schema level.
pub fn lint_requirements(artifact: &EvidenceArtifact, policy: &PolicyConfig) -> LintReport {
    let mut missing_must = Vec::new();
    let mut missing_should = Vec::new();
    let mut undisclosed_should = Vec::new();

    for spec in SCHEMA.iter() {
        let level = if policy.required_fields.iter().any(|id| id == spec.id) {
            RequirementLevel::Must
        } else {
            spec.level
        };
        let status = artifact
            .field(spec.key)
            .map(|r| r.status)
            .unwrap_or(FieldStatus::Absent);
        match (level, status) {
            (_, FieldStatus::Present) | (RequirementLevel::May, _) => {}
            (RequirementLevel::Must, _) => missing_must.push(spec.id.to_string()),
            (RequirementLevel::Should, FieldStatus::UndisclosedByPublisher) => {
                undisclosed_should.push(spec.id.to_string())
            }
            (RequirementLevel::Should, FieldStatus::Absent) => {
                missing_should.push(spec.id.to_string())
            }
        }
    }

    let verdict = if !missing_must.is_empty() {
        LintVerdict::FailMust
    } else if !missing_should.is_empty() {
        LintVerdict::WarnShould
    } else {
        LintVerdict::Pass
    };
    LintReport {
        missing_must,
        missing_should,
        undisclosed_should,
        verdict,
    }
}
