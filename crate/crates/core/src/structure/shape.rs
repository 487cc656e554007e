use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::StructureError;
use crate::packaging::SafetensorsHeader;

pub const DEFAULT_SHAPE_PATTERNS_JSON: &str = include_str!("../../data/shape-patterns.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionRule {
    pub config_key: String,
    pub tensor_pattern: String,
    pub dim: usize,
}

/// Maps config keys onto tensor dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapePatterns {
    /// Canonical key → config spellings, tried in order.
    pub config_aliases: BTreeMap<String, Vec<String>>,
    /// Sub-objects searched when the top level lacks a key.
    #[serde(default)]
    pub nested_configs: Vec<String>,
    pub dimension_rules: Vec<DimensionRule>,
    /// Regex whose first group captures a layer index from a tensor name.
    pub layer_index_pattern: String,
}

impl Default for ShapePatterns {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_SHAPE_PATTERNS_JSON).expect("shipped shape patterns parse")
    }
}

type CompiledPatterns<'a> = (Vec<(&'a DimensionRule, Regex)>, Regex);

impl ShapePatterns {
    pub fn from_json(bytes: &[u8]) -> Result<Self, StructureError> {
        let p: ShapePatterns =
            serde_json::from_slice(bytes).map_err(|e| StructureError::Patterns(e.to_string()))?;
        p.compile()?;
        Ok(p)
    }

    fn compile(&self) -> Result<CompiledPatterns<'_>, StructureError> {
        let rules = self
            .dimension_rules
            .iter()
            .map(|r| Regex::new(&r.tensor_pattern).map(|re| (r, re)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| StructureError::Patterns(e.to_string()))?;
        let layer = Regex::new(&self.layer_index_pattern)
            .map_err(|e| StructureError::Patterns(e.to_string()))?;
        Ok((rules, layer))
    }

    /// Looks up a canonical key through its aliases, at top level then in nested configs.
    pub fn config_value(&self, config: &Value, key: &str) -> Option<u64> {
        let aliases = self.config_aliases.get(key)?;
        let scopes =
            std::iter::once(Some(config)).chain(self.nested_configs.iter().map(|n| config.get(n)));
        for scope in scopes.flatten() {
            if let Some(v) = aliases
                .iter()
                .find_map(|a| scope.get(a).and_then(Value::as_u64))
            {
                return Some(v);
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeCheck {
    pub config_key: String,
    pub expected: u64,
    pub tensor_name: String,
    pub observed: u64,
    pub ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeVerdict {
    Consistent,
    Inconsistent,
    Unchecked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub checks: Vec<ShapeCheck>,
    /// Canonical keys that could not be compared (missing from config or no matching tensor).
    pub unchecked: Vec<String>,
    pub verdict: ShapeVerdict,
}

impl ShapeReport {
    pub fn mismatches(&self) -> impl Iterator<Item = &ShapeCheck> {
        self.checks.iter().filter(|c| !c.ok)
    }
}

/// Compares config dimensions against tensor shapes using the shipped pattern table.
pub fn shape_consistency(config: &Value, headers: &[SafetensorsHeader]) -> ShapeReport {
    shape_consistency_with(config, headers, &ShapePatterns::default())
}

pub fn shape_consistency_with(
    config: &Value,
    headers: &[SafetensorsHeader],
    patterns: &ShapePatterns,
) -> ShapeReport {
    let (rules, layer_re) = patterns.compile().expect("patterns validated on load");
    let tensors: BTreeMap<&str, &Vec<u64>> = headers
        .iter()
        .flat_map(|h| h.tensors.iter().map(|(n, t)| (n.as_str(), &t.shape)))
        .collect();
    let mut checks = Vec::new();
    let mut unchecked = Vec::new();

    for key in patterns.config_aliases.keys() {
        let Some(expected) = patterns.config_value(config, key) else {
            unchecked.push(key.clone());
            continue;
        };
        let before = checks.len();
        if key == "num_layers" {
            let deepest = tensors
                .keys()
                .filter_map(|name| {
                    let idx = layer_re
                        .captures(name)?
                        .get(1)?
                        .as_str()
                        .parse::<u64>()
                        .ok()?;
                    Some((idx, *name))
                })
                .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(a.1)));
            if let Some((idx, name)) = deepest {
                checks.push(ShapeCheck {
                    config_key: key.clone(),
                    expected,
                    tensor_name: name.to_string(),
                    observed: idx + 1,
                    ok: idx + 1 == expected,
                });
            }
        }
        for (rule, re) in rules.iter().filter(|(r, _)| &r.config_key == key) {
            for (name, shape) in tensors.iter().filter(|(n, _)| re.is_match(n)) {
                if let Some(&observed) = shape.get(rule.dim) {
                    checks.push(ShapeCheck {
                        config_key: key.clone(),
                        expected,
                        tensor_name: name.to_string(),
                        observed,
                        ok: observed == expected,
                    });
                }
            }
        }
        if checks.len() == before {
            unchecked.push(key.clone());
        }
    }
    let verdict = if checks.is_empty() {
        ShapeVerdict::Unchecked
    } else if checks.iter().all(|c| c.ok) {
        ShapeVerdict::Consistent
    } else {
        ShapeVerdict::Inconsistent
    };
    ShapeReport {
        checks,
        unchecked,
        verdict,
    }
}
