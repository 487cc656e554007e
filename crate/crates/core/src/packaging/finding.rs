use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warn,
    Critical,
}

/// Where inside a file a finding points.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Locus {
    /// Archive member, for findings inside containers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub member: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opcode_index: Option<usize>,
}

impl Locus {
    pub fn offset(offset: u64) -> Self {
        Locus {
            offset: Some(offset),
            ..Locus::default()
        }
    }
}

/// A typed scan result. `threat_ref` names a row of the threat table ("2.1", ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub id: String,
    pub severity: Severity,
    pub threat_ref: Option<String>,
    pub path: String,
    pub locus: Option<Locus>,
    pub reason: String,
    pub evidence: Value,
}

impl Finding {
    fn new(id: &str, severity: Severity, threat: Option<&str>, path: &str, reason: String) -> Self {
        assert!(!reason.is_empty(), "finding {id} needs a reason");
        Finding {
            id: id.to_string(),
            severity,
            threat_ref: threat.map(str::to_string),
            path: path.to_string(),
            locus: None,
            reason,
            evidence: Value::Null,
        }
    }

    pub fn critical(id: &str, threat: &str, path: &str, reason: impl Into<String>) -> Self {
        Self::new(id, Severity::Critical, Some(threat), path, reason.into())
    }

    pub fn warn(id: &str, threat: Option<&str>, path: &str, reason: impl Into<String>) -> Self {
        Self::new(id, Severity::Warn, threat, path, reason.into())
    }

    pub fn info(id: &str, threat: Option<&str>, path: &str, reason: impl Into<String>) -> Self {
        Self::new(id, Severity::Info, threat, path, reason.into())
    }

    pub fn at(mut self, locus: Locus) -> Self {
        self.locus = Some(locus);
        self
    }

    pub fn with_evidence(mut self, evidence: Value) -> Self {
        self.evidence = evidence;
        self
    }

    pub fn is_critical(&self) -> bool {
        self.severity == Severity::Critical
    }
}
