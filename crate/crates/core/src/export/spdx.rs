use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::{
    check_lint, compact, insert_once, parse_compact, present_fields, split_native, ExportError,
    AIRS_PREFIX, DISCLAIMER, META_PREFIX,
};
use crate::evidence::EvidenceArtifact;
use crate::packaging::PolicyConfig;

const EVAL_PREFIX: &str = "eval:";
const EVAL_KEYS: [&str; 4] = [
    "benchmark_summary",
    "eval_datasets",
    "metrics",
    "training_data_cutoff",
];
const CREATION_INFO: &str = "_:creationinfo";

struct Ids {
    base: String,
}

impl Ids {
    fn new(artifact: &EvidenceArtifact) -> Self {
        Ids {
            base: format!("urn:airscan:{}", artifact.canonical_digest()),
        }
    }
    fn local(&self, name: &str) -> String {
        format!("{}#{name}", self.base)
    }
}

fn annotation(ids: &Ids, subject: &str, name: &str, statement: String) -> Value {
    json!({
        "type": "Annotation",
        "spdxId": ids.local(name),
        "creationInfo": CREATION_INFO,
        "annotationType": "other",
        "subject": subject,
        "statement": statement,
    })
}

/// Exports the artifact as an SPDX-3.0-shaped JSON-LD document.
///
/// Identity fields land on the package, the license becomes a license
/// expression with a `hasDeclaredLicense` relationship, `base_model` an
/// `ancestorOf` relationship, and the evaluation fields `eval:` annotations.
/// Everything else becomes an `airs:<key>` annotation whose statement is the
/// value in canonical JSON. Identity and base-model values must be strings to
/// map natively; other shapes fall back to an annotation.
pub fn export_spdx(
    artifact: &EvidenceArtifact,
    policy: &PolicyConfig,
    force: bool,
) -> Result<Value, ExportError> {
    check_lint(artifact, policy, force)?;
    let ids = Ids::new(artifact);
    let subject = artifact.subject();
    let pkg_id = ids.local("model");
    let mut package = json!({
        "type": "ai_AIPackage",
        "spdxId": pkg_id,
        "creationInfo": CREATION_INFO,
        "name": subject.model_name,
        "packageVersion": subject.version_or_commit,
        "externalIdentifier": [{
            "type": "ExternalIdentifier",
            "externalIdentifierType": "other",
            "identifier": subject.model_id,
            "comment": "model_id",
        }],
    });
    let mut graph = vec![
        json!({
            "type": "CreationInfo",
            "@id": CREATION_INFO,
            "specVersion": "3.0.1",
            "created": artifact.generated_at().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            "createdBy": [ids.local("tool")],
        }),
        json!({
            "type": "Tool",
            "spdxId": ids.local("tool"),
            "creationInfo": CREATION_INFO,
            "name": format!("{} {}", artifact.tool_info().name, artifact.tool_info().version),
        }),
    ];
    let mut elements = Vec::new();
    let mut native = Vec::new();

    for (key, value) in present_fields(artifact) {
        let text = value.as_str();
        match (key, text) {
            ("model_name", Some(s)) => package["name"] = json!(s),
            ("version_or_commit", Some(s)) => package["packageVersion"] = json!(s),
            ("model_id", Some(s)) => package["externalIdentifier"][0]["identifier"] = json!(s),
            ("license", Some(s)) => {
                elements.push(json!({
                    "type": "simplelicensing_LicenseExpression",
                    "spdxId": ids.local("license"),
                    "creationInfo": CREATION_INFO,
                    "simplelicensing_licenseExpression": s,
                }));
                elements.push(json!({
                    "type": "Relationship",
                    "spdxId": ids.local("rel-license"),
                    "creationInfo": CREATION_INFO,
                    "relationshipType": "hasDeclaredLicense",
                    "from": pkg_id,
                    "to": [ids.local("license")],
                }));
            }
            ("base_model", Some(s)) => {
                elements.push(json!({
                    "type": "ai_AIPackage",
                    "spdxId": ids.local("base-model"),
                    "creationInfo": CREATION_INFO,
                    "name": s,
                }));
                elements.push(json!({
                    "type": "Relationship",
                    "spdxId": ids.local("rel-base-model"),
                    "creationInfo": CREATION_INFO,
                    "relationshipType": "ancestorOf",
                    "from": ids.local("base-model"),
                    "to": [pkg_id],
                }));
            }
            _ if EVAL_KEYS.contains(&key) => {
                elements.push(annotation(
                    &ids,
                    &pkg_id,
                    &format!("{EVAL_PREFIX}{key}"),
                    compact(value),
                ));
            }
            _ => {
                elements.push(annotation(
                    &ids,
                    &pkg_id,
                    &format!("{AIRS_PREFIX}{key}"),
                    compact(value),
                ));
                continue;
            }
        }
        native.push(key);
    }

    let doc_id = ids.local("document");
    graph.push(json!({
        "type": "SpdxDocument",
        "spdxId": doc_id,
        "creationInfo": CREATION_INFO,
        "name": format!("AIRS evidence for {}", subject.model_id),
        "comment": DISCLAIMER,
        "rootElement": [pkg_id],
    }));
    graph.push(package);
    graph.extend(elements);
    for (name, statement) in [
        ("disclaimer", DISCLAIMER.to_string()),
        ("forced", force.to_string()),
        ("native", native.join(",")),
    ] {
        graph.push(annotation(
            &ids,
            &doc_id,
            &format!("{META_PREFIX}{name}"),
            statement,
        ));
    }
    Ok(json!({
        "@context": "https://spdx.org/rdf/3.0.1/spdx-context.jsonld",
        "@graph": graph,
    }))
}

fn local_name(element: &Value) -> Option<&str> {
    element
        .get("spdxId")?
        .as_str()?
        .rsplit_once('#')
        .map(|(_, n)| n)
}

fn str_at<'a>(v: &'a Value, ptr: &str, what: &str) -> Result<&'a str, ExportError> {
    v.pointer(ptr)
        .and_then(Value::as_str)
        .ok_or_else(|| ExportError::Malformed(format!("missing {what}")))
}

/// Rebuilds the Present field map (key to value) from an SPDX-shaped export.
pub fn recover_spdx_fields(doc: &Value) -> Result<BTreeMap<String, Value>, ExportError> {
    let graph = doc
        .get("@graph")
        .and_then(Value::as_array)
        .ok_or_else(|| ExportError::Malformed("missing @graph".into()))?;
    let by_name: BTreeMap<&str, &Value> = graph
        .iter()
        .filter_map(|e| Some((local_name(e)?, e)))
        .collect();
    let element = |name: &str| {
        by_name
            .get(name)
            .copied()
            .ok_or_else(|| ExportError::Malformed(format!("missing element {name}")))
    };

    let mut out = BTreeMap::new();
    let native = split_native(str_at(
        element(&format!("{META_PREFIX}native"))?,
        "/statement",
        "native list",
    )?);
    let package = element("model")?;
    for key in native {
        let value = match key.as_str() {
            "model_name" => json!(str_at(package, "/name", "package name")?),
            "version_or_commit" => json!(str_at(package, "/packageVersion", "package version")?),
            "model_id" => json!(str_at(
                package,
                "/externalIdentifier/0/identifier",
                "external identifier"
            )?),
            "license" => json!(str_at(
                element("license")?,
                "/simplelicensing_licenseExpression",
                "license expression"
            )?),
            "base_model" => json!(str_at(element("base-model")?, "/name", "base model name")?),
            k if EVAL_KEYS.contains(&k) => parse_compact(
                str_at(element(&format!("{EVAL_PREFIX}{k}"))?, "/statement", k)?,
                k,
            )?,
            other => {
                return Err(ExportError::Malformed(format!(
                    "unexpected native field {other}"
                )))
            }
        };
        insert_once(&mut out, key, value)?;
    }
    for (name, e) in &by_name {
        if let Some(key) = name.strip_prefix(AIRS_PREFIX) {
            insert_once(
                &mut out,
                key.to_string(),
                parse_compact(str_at(e, "/statement", key)?, key)?,
            )?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{artifact_with, identity_records};
    use super::*;
    use crate::evidence::FieldRecord;

    fn airs_annotations(doc: &Value) -> Vec<String> {
        doc["@graph"]
            .as_array()
            .unwrap()
            .iter()
            .filter_map(local_name)
            .filter(|n| n.starts_with(AIRS_PREFIX))
            .map(str::to_string)
            .collect()
    }

    #[test]
    fn identity_fields_are_native() {
        let a = artifact_with(identity_records());
        let doc = export_spdx(&a, &PolicyConfig::default(), true).unwrap();
        assert!(airs_annotations(&doc).is_empty());
        let graph = doc["@graph"].as_array().unwrap();
        let lic = graph
            .iter()
            .find(|e| e["type"] == "simplelicensing_LicenseExpression")
            .unwrap();
        assert_eq!(lic["simplelicensing_licenseExpression"], "apache-2.0");
        let rec = recover_spdx_fields(&doc).unwrap();
        assert_eq!(rec.len(), 4);
        assert_eq!(rec["model_id"], "org/demo");
    }

    #[test]
    fn packaging_policy_is_only_an_annotation() {
        let mut records = identity_records();
        records.push(FieldRecord::measured(
            "packaging_policy",
            json!({"allowed": ["safetensors"]}),
            "",
        ));
        let doc = export_spdx(&artifact_with(records), &PolicyConfig::default(), true).unwrap();
        assert_eq!(airs_annotations(&doc), ["airs:packaging_policy"]);
        let rec = recover_spdx_fields(&doc).unwrap();
        assert_eq!(rec["packaging_policy"], json!({"allowed": ["safetensors"]}));
    }

    #[test]
    fn empty_artifact_keeps_subject_identity() {
        let doc = export_spdx(&artifact_with(vec![]), &PolicyConfig::default(), true).unwrap();
        let pkg = doc["@graph"]
            .as_array()
            .unwrap()
            .iter()
            .find(|e| local_name(e) == Some("model"))
            .unwrap();
        assert_eq!(pkg["name"], "demo");
        assert!(recover_spdx_fields(&doc).unwrap().is_empty());
    }

    #[test]
    fn base_model_and_eval_fields() {
        let records = vec![
            FieldRecord::asserted("base_model", json!("org/base"), None, ""),
            FieldRecord::asserted("metrics", json!({"accuracy": 0.5}), None, ""),
            FieldRecord::asserted("model_name", json!({"not": "a string"}), None, ""),
        ];
        let doc = export_spdx(&artifact_with(records), &PolicyConfig::default(), true).unwrap();
        let graph = doc["@graph"].as_array().unwrap();
        assert!(graph.iter().any(|e| e["relationshipType"] == "ancestorOf"));
        assert_eq!(airs_annotations(&doc), ["airs:model_name"]);
        let rec = recover_spdx_fields(&doc).unwrap();
        assert_eq!(rec["base_model"], "org/base");
        assert_eq!(rec["metrics"], json!({"accuracy": 0.5}));
        assert_eq!(rec["model_name"], json!({"not": "a string"}));
    }
}
