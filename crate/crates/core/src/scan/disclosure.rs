//! Publisher disclosure file (`airs-disclosure.json`).
//!
//! ```json
//! {
//!   "model_name": "tiny-demo",
//!   "license": "apache-2.0",
//!   "base_model": "org/base",
//!   "sources": {"license": "https://example.org/LICENSE"},
//!   "undisclosed": ["signature_bundle"]
//! }
//! ```
//!
//! Any schema field key may appear at top level; its value is recorded as a
//! publisher assertion unless the scanner measured the field itself.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use crate::evidence::schema;
use crate::packaging::Finding;

pub const DISCLOSURE_FILE: &str = "airs-disclosure.json";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Disclosure {
    /// Schema key → asserted value.
    pub fields: BTreeMap<String, Value>,
    /// Schema key → source URL for the assertion.
    pub sources: BTreeMap<String, String>,
    /// Keys the publisher explicitly declines to disclose.
    pub undisclosed: Vec<String>,
}

impl Disclosure {
    pub fn asserted_str(&self, key: &str) -> Option<&str> {
        self.fields
            .get(key)
            .and_then(Value::as_str)
            .filter(|s| !s.trim().is_empty())
    }
}

/// Parses a disclosure document. Keys outside the schema produce Warn findings
/// and are otherwise ignored.
pub fn parse_disclosure(bytes: &[u8]) -> Result<(Disclosure, Vec<Finding>), String> {
    let obj: Map<String, Value> = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    let mut d = Disclosure::default();
    let mut findings = Vec::new();
    let unknown = |key: &str| {
        Finding::warn(
            "disclosure.unknown_key",
            None,
            DISCLOSURE_FILE,
            format!("{key} is not an evidence field"),
        )
    };
    for (key, value) in obj {
        match key.as_str() {
            "sources" => {
                let Value::Object(m) = value else {
                    return Err("sources must be an object".into());
                };
                for (k, v) in m {
                    let url = v
                        .as_str()
                        .ok_or_else(|| format!("source for {k} must be a string"))?;
                    if schema::by_key(&k).is_none() {
                        findings.push(unknown(&k));
                        continue;
                    }
                    d.sources.insert(k, url.to_string());
                }
            }
            "undisclosed" => {
                let Value::Array(list) = value else {
                    return Err("undisclosed must be an array".into());
                };
                for v in list {
                    let k = v.as_str().ok_or("undisclosed entries must be strings")?;
                    if schema::by_key(k).is_none() {
                        findings.push(unknown(k));
                        continue;
                    }
                    d.undisclosed.push(k.to_string());
                }
            }
            k if schema::by_key(k).is_some() => {
                d.fields.insert(key, value);
            }
            _ => findings.push(unknown(&key)),
        }
    }
    d.undisclosed.sort();
    d.undisclosed.dedup();
    Ok((d, findings))
}
