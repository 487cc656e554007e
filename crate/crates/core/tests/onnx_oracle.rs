//! ONNX operator extraction on a model serialized by the `onnx` Python package.

use std::path::PathBuf;

use airscan_core::packaging::{scan_onnx_ops, PolicyConfig, Severity};
use serde_json::{json, Value};

#[test]
fn operators_and_custom_domain_match_onnx_package() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let oracle: Value =
        serde_json::from_slice(&std::fs::read(dir.join("onnx_oracle.json")).unwrap()).unwrap();
    let (scan, findings) =
        scan_onnx_ops(&dir.join("custom_op.onnx"), &PolicyConfig::default()).unwrap();

    let mut ops: Vec<Value> = scan
        .operators
        .iter()
        .map(|o| json!({"domain": o.domain, "op_type": o.op_type, "count": o.count}))
        .collect();
    ops.sort_by_key(|v| {
        (
            v["domain"].as_str().unwrap().to_string(),
            v["op_type"].as_str().unwrap().to_string(),
        )
    });
    assert_eq!(Value::Array(ops), oracle["operators"]);

    let mut domains = scan.opset_domains.clone();
    domains.sort();
    assert_eq!(
        serde_json::to_value(domains).unwrap(),
        oracle["opset_domains"]
    );

    let critical: Vec<&Value> = findings
        .iter()
        .filter(|f| f.severity == Severity::Critical)
        .map(|f| &f.evidence)
        .collect();
    assert_eq!(critical.len(), 1);
    assert_eq!(critical[0]["op_type"], "Backdoor");
    assert_eq!(critical[0]["domain"], "com.evil");
}
