use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    check_lint, compact, insert_once, parse_compact, present_fields, split_native, ExportError,
    AIRS_PREFIX, DISCLAIMER, META_PREFIX,
};
use crate::evidence::EvidenceArtifact;
use crate::integrity::ManifestEntry;
use crate::packaging::{DetectedKind, InventoryEntry, PolicyConfig};

const MANIFEST_REF: &str = "airs-manifest:";
const INVENTORY_REF: &str = "airs-inventory:";
const BINARY_REF: &str = "airs-binary:";
const ENTRY_PROP: &str = "airs-entry:";

/// The `{"entries": [...]}` shape shared by the manifest and inventory fields.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entries<T> {
    entries: Vec<T>,
}

/// Parses `value` as `T` only when re-serializing gives the same value back,
/// so a native mapping never loses information.
fn lossless<T: DeserializeOwned + Serialize>(value: &Value) -> Option<T> {
    let parsed: T = serde_json::from_value(value.clone()).ok()?;
    (serde_json::to_value(&parsed).ok()? == *value).then_some(parsed)
}

fn prop(name: &str, value: impl ToString) -> Value {
    json!({"name": name, "value": value.to_string()})
}

fn sha_hash(hex: &str) -> Value {
    json!({"alg": "SHA-256", "content": hex})
}

fn serial_number(digest: &str) -> String {
    let h = |r: std::ops::Range<usize>| &digest[r];
    format!(
        "urn:uuid:{}-{}-5{}-8{}-{}",
        h(0..8),
        h(8..12),
        h(13..16),
        h(17..20),
        h(20..32)
    )
}

fn inventory_component(prefix: &str, e: &InventoryEntry) -> Value {
    let kind = serde_json::to_value(e.detected_kind).expect("kind serializes");
    json!({
        "type": "file",
        "bom-ref": format!("{prefix}{}", e.relative_path),
        "name": e.relative_path,
        "properties": [
            prop(&format!("{ENTRY_PROP}size_bytes"), e.size_bytes),
            prop(&format!("{ENTRY_PROP}detected_kind"), kind.as_str().unwrap_or_default()),
            prop(&format!("{ENTRY_PROP}magic"), &e.magic),
        ],
    })
}

/// Exports the artifact as a CycloneDX-1.6-shaped JSON document.
///
/// The model becomes `metadata.component` of type `machine-learning-model`.
/// The hash manifest fills its `hashes` and adds one file subcomponent per
/// entry; file and binary inventories add file subcomponents. Every other
/// Present field is an `airs:<key>` property holding canonical JSON.
pub fn export_cdx(
    artifact: &EvidenceArtifact,
    policy: &PolicyConfig,
    force: bool,
) -> Result<Value, ExportError> {
    check_lint(artifact, policy, force)?;
    let subject = artifact.subject();
    let mut component = json!({
        "type": "machine-learning-model",
        "bom-ref": subject.model_id,
        "name": subject.model_name,
        "version": subject.version_or_commit,
    });
    let mut hashes = Vec::new();
    let mut subcomponents = Vec::new();
    let mut properties = Vec::new();
    let mut native = Vec::new();

    for (key, value) in present_fields(artifact) {
        let text = value.as_str();
        match key {
            "model_name" if text.is_some() => component["name"] = json!(text),
            "model_id" if text.is_some() => component["bom-ref"] = json!(text),
            "version_or_commit" if text.is_some() => component["version"] = json!(text),
            "license" if text.is_some() => component["licenses"] = json!([{"expression": text}]),
            "hash_manifest" if lossless::<Entries<ManifestEntry>>(value).is_some() => {
                for e in lossless::<Entries<ManifestEntry>>(value)
                    .map(|m| m.entries)
                    .unwrap_or_default()
                {
                    hashes.push(sha_hash(&e.sha256));
                    subcomponents.push(json!({
                        "type": "file",
                        "bom-ref": format!("{MANIFEST_REF}{}", e.relative_path),
                        "name": e.relative_path,
                        "hashes": [sha_hash(&e.sha256)],
                        "properties": [prop(&format!("{ENTRY_PROP}size"), e.size_bytes)],
                    }));
                }
            }
            "file_inventory" | "binary_inventory"
                if lossless::<Entries<InventoryEntry>>(value).is_some() =>
            {
                let prefix = if key == "file_inventory" {
                    INVENTORY_REF
                } else {
                    BINARY_REF
                };
                for e in lossless::<Entries<InventoryEntry>>(value)
                    .map(|i| i.entries)
                    .unwrap_or_default()
                {
                    subcomponents.push(inventory_component(prefix, &e));
                }
            }
            _ => {
                properties.push(prop(&format!("{AIRS_PREFIX}{key}"), compact(value)));
                continue;
            }
        }
        native.push(key);
    }
    if !hashes.is_empty() {
        component["hashes"] = json!(hashes);
    }
    if !subcomponents.is_empty() {
        component["components"] = json!(subcomponents);
    }
    if !properties.is_empty() {
        component["properties"] = json!(properties);
    }
    let tool = artifact.tool_info();
    Ok(json!({
        "bomFormat": "CycloneDX",
        "specVersion": "1.6",
        "serialNumber": serial_number(artifact.canonical_digest()),
        "version": 1,
        "metadata": {
            "timestamp": artifact.generated_at().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            "tools": {"components": [{"type": "application", "name": tool.name, "version": tool.version}]},
            "component": component,
            "properties": [
                prop(&format!("{META_PREFIX}disclaimer"), DISCLAIMER),
                prop(&format!("{META_PREFIX}forced"), force),
                prop(&format!("{META_PREFIX}native"), native.join(",")),
            ],
        },
    }))
}

fn properties_of(v: &Value) -> BTreeMap<&str, &str> {
    v.get("properties")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .filter_map(|p| Some((p.get("name")?.as_str()?, p.get("value")?.as_str()?)))
        .collect()
}

fn malformed(what: impl Into<String>) -> ExportError {
    ExportError::Malformed(what.into())
}

fn entry_prop<'a>(props: &BTreeMap<&str, &'a str>, name: &str) -> Result<&'a str, ExportError> {
    props
        .get(format!("{ENTRY_PROP}{name}").as_str())
        .copied()
        .ok_or_else(|| malformed(format!("missing {name}")))
}

fn recover_inventory(subs: &[Value], prefix: &str) -> Result<Value, ExportError> {
    let mut entries = Vec::new();
    for s in subs
        .iter()
        .filter(|s| s["bom-ref"].as_str().is_some_and(|r| r.starts_with(prefix)))
    {
        let props = properties_of(s);
        let kind: DetectedKind =
            serde_json::from_value(json!(entry_prop(&props, "detected_kind")?))
                .map_err(|e| malformed(format!("detected_kind: {e}")))?;
        entries.push(InventoryEntry {
            relative_path: s["name"]
                .as_str()
                .ok_or_else(|| malformed("inventory name"))?
                .to_string(),
            size_bytes: entry_prop(&props, "size_bytes")?
                .parse()
                .map_err(|_| malformed("size_bytes"))?,
            detected_kind: kind,
            magic: entry_prop(&props, "magic")?.to_string(),
        });
    }
    Ok(serde_json::to_value(Entries { entries }).expect("inventory serializes"))
}

fn recover_manifest(subs: &[Value]) -> Result<Value, ExportError> {
    let mut entries = Vec::new();
    for s in subs.iter().filter(|s| {
        s["bom-ref"]
            .as_str()
            .is_some_and(|r| r.starts_with(MANIFEST_REF))
    }) {
        let props = properties_of(s);
        entries.push(ManifestEntry {
            relative_path: s["name"]
                .as_str()
                .ok_or_else(|| malformed("manifest name"))?
                .to_string(),
            size_bytes: entry_prop(&props, "size")?
                .parse()
                .map_err(|_| malformed("size"))?,
            sha256: s
                .pointer("/hashes/0/content")
                .and_then(Value::as_str)
                .ok_or_else(|| malformed("hash"))?
                .to_string(),
        });
    }
    Ok(serde_json::to_value(Entries { entries }).expect("manifest serializes"))
}

/// Rebuilds the Present field map (key to value) from a CycloneDX-shaped export.
pub fn recover_cdx_fields(doc: &Value) -> Result<BTreeMap<String, Value>, ExportError> {
    let component = doc
        .pointer("/metadata/component")
        .ok_or_else(|| malformed("missing metadata.component"))?;
    let meta = properties_of(&doc["metadata"]);
    let native = meta
        .get(format!("{META_PREFIX}native").as_str())
        .ok_or_else(|| malformed("missing native list"))?;
    let subs = component
        .get("components")
        .and_then(Value::as_array)
        .map(Vec::as_slice)
        .unwrap_or_default();
    let text = |ptr: &str| {
        component
            .pointer(ptr)
            .and_then(Value::as_str)
            .map(|s| json!(s))
            .ok_or_else(|| malformed(format!("missing {ptr}")))
    };

    let mut out = BTreeMap::new();
    for key in split_native(native) {
        let value = match key.as_str() {
            "model_name" => text("/name")?,
            "model_id" => text("/bom-ref")?,
            "version_or_commit" => text("/version")?,
            "license" => text("/licenses/0/expression")?,
            "hash_manifest" => recover_manifest(subs)?,
            "file_inventory" => recover_inventory(subs, INVENTORY_REF)?,
            "binary_inventory" => recover_inventory(subs, BINARY_REF)?,
            other => return Err(malformed(format!("unexpected native field {other}"))),
        };
        insert_once(&mut out, key, value)?;
    }
    for (name, value) in properties_of(component) {
        if let Some(key) = name.strip_prefix(AIRS_PREFIX) {
            insert_once(&mut out, key.to_string(), parse_compact(value, key)?)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{artifact_with, identity_records};
    use super::*;
    use crate::evidence::FieldRecord;

    #[test]
    fn manifest_of_two_files_gives_two_hashes() {
        let manifest = json!({"entries": [
            {"path": "a.safetensors", "size": 3, "sha256": "aa".repeat(32)},
            {"path": "config.json", "size": 2, "sha256": "bb".repeat(32)},
        ]});
        let mut records = identity_records();
        records.push(FieldRecord::measured("hash_manifest", manifest.clone(), ""));
        let doc = export_cdx(&artifact_with(records), &PolicyConfig::default(), true).unwrap();
        let c = &doc["metadata"]["component"];
        assert_eq!(c["type"], "machine-learning-model");
        assert_eq!(c["bom-ref"], "org/demo");
        assert_eq!(c["hashes"].as_array().unwrap().len(), 2);
        assert!(c.get("properties").is_none());
        assert_eq!(recover_cdx_fields(&doc).unwrap()["hash_manifest"], manifest);
    }

    #[test]
    fn detector_outputs_is_a_property_only() {
        let outputs = json!([{"probe": "logprob", "auc": 0.6}]);
        let doc = export_cdx(
            &artifact_with(vec![FieldRecord::measured(
                "detector_outputs",
                outputs.clone(),
                "",
            )]),
            &PolicyConfig::default(),
            true,
        )
        .unwrap();
        let c = &doc["metadata"]["component"];
        assert_eq!(c["properties"][0]["name"], "airs:detector_outputs");
        assert!(c.get("components").is_none());
        assert_eq!(
            recover_cdx_fields(&doc).unwrap()["detector_outputs"],
            outputs
        );
    }

    #[test]
    fn identity_only_is_a_bare_component() {
        let doc = export_cdx(
            &artifact_with(identity_records()),
            &PolicyConfig::default(),
            true,
        )
        .unwrap();
        let c = &doc["metadata"]["component"];
        assert!(c.get("properties").is_none() && c.get("components").is_none());
        assert_eq!(
            doc["metadata"]["properties"][0]["name"],
            "airs-meta:disclaimer"
        );
        assert_eq!(c["licenses"][0]["expression"], "apache-2.0");
        assert_eq!(recover_cdx_fields(&doc).unwrap().len(), 4);
        assert!(doc["serialNumber"]
            .as_str()
            .unwrap()
            .starts_with("urn:uuid:"));
    }

    #[test]
    fn inventories_round_trip_and_odd_shapes_fall_back() {
        let inv = json!({"entries": [{"relative_path": "lib.so", "size_bytes": 4, "detected_kind": "native_binary", "magic": "7f454c46"}]});
        let records = vec![
            FieldRecord::measured("file_inventory", inv.clone(), ""),
            FieldRecord::measured("binary_inventory", inv.clone(), ""),
            FieldRecord::measured(
                "hash_manifest",
                json!({"entries": [], "unexpected": true}),
                "",
            ),
        ];
        let doc = export_cdx(&artifact_with(records), &PolicyConfig::default(), true).unwrap();
        let rec = recover_cdx_fields(&doc).unwrap();
        assert_eq!(rec["file_inventory"], inv);
        assert_eq!(rec["binary_inventory"], inv);
        assert_eq!(
            rec["hash_manifest"],
            json!({"entries": [], "unexpected": true})
        );
    }
}
