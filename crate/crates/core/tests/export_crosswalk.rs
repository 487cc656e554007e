//! Crosswalk coverage counts and lossless SPDX / CycloneDX round trips.

use std::collections::BTreeMap;

use airscan_core::evidence::{assemble_artifact, EvidenceArtifact, FieldRecord, SCHEMA};
use airscan_core::export::{
    crosswalk_report, export_cdx, export_spdx, recover_cdx_fields, recover_spdx_fields,
    CrosswalkMap,
};
use airscan_core::packaging::PolicyConfig;
use airscan_core::scan::fixtures::{make_fixture, FixtureCase};
use airscan_core::scan::{run_scan, ScanRequest};
use serde_json::{json, Value};

/// Scans the clean fixture and fills every field the scan left unpopulated.
fn full_artifact() -> EvidenceArtifact {
    let tmp = tempfile::tempdir().unwrap();
    make_fixture(FixtureCase::Clean, tmp.path()).unwrap();
    let mut req = ScanRequest::new(tmp.path());
    req.reproducible = true;
    let scanned = run_scan(&req).unwrap().artifact;
    let records: Vec<FieldRecord> = scanned
        .fields()
        .iter()
        .map(|r| {
            if r.is_present() {
                r.clone()
            } else {
                FieldRecord::asserted(
                    &r.key,
                    json!({"declared": format!("{} value", r.key), "n": 1}),
                    None,
                    "test fill",
                )
            }
        })
        .collect();
    assemble_artifact(
        scanned.subject().clone(),
        records,
        scanned.tool_info().clone(),
    )
    .unwrap()
}

/// The reference crosswalk, row by row: (id, SPDX 3.0, CDX 1.6).
const CROSSWALK_TABLE: [(&str, bool, bool); 26] = [
    ("1.1", true, true),
    ("1.2", true, true),
    ("1.3", true, true),
    ("1.4", true, true),
    ("1.5", false, true),
    ("1.6", false, false),
    ("1.7", false, false),
    ("1.8", false, false),
    ("1.9", false, false),
    ("1.10", false, false),
    ("2.1", false, false),
    ("2.2", false, false),
    ("2.3", false, false),
    ("2.4", false, true),
    ("2.5", false, true),
    ("3.1", true, false),
    ("3.2", false, false),
    ("3.3", false, false),
    ("3.4", false, false),
    ("4.1", false, false),
    ("4.2", false, false),
    ("4.3", false, false),
    ("5.1", true, false),
    ("5.2", true, false),
    ("5.3", true, false),
    ("5.5", true, false),
];

#[test]
fn crosswalk_table_is_cell_for_cell() {
    let map = CrosswalkMap::default();
    assert_eq!(map.rows().len(), CROSSWALK_TABLE.len());
    for (id, spdx, cdx) in CROSSWALK_TABLE {
        let row = map
            .rows()
            .iter()
            .find(|r| r.field_id == id)
            .unwrap_or_else(|| panic!("row {id}"));
        assert_eq!((row.spdx_covered, row.cdx_covered), (spdx, cdx), "row {id}");
    }
}

#[test]
fn full_artifact_coverage_counts() {
    let a = full_artifact();
    assert!(SCHEMA.iter().all(|s| a.present(s.key).is_some()));
    let report = crosswalk_report(&a);
    assert_eq!((report.mapped_spdx, report.mapped_cdx), (9, 7));
}

fn present_values(a: &EvidenceArtifact) -> BTreeMap<String, Value> {
    a.fields()
        .iter()
        .filter(|r| r.is_present())
        .map(|r| (r.key.clone(), r.value.clone()))
        .collect()
}

#[test]
fn exports_round_trip_every_present_field() {
    let a = full_artifact();
    let policy = PolicyConfig::default();
    let expected = present_values(&a);
    assert_eq!(expected.len(), 41);

    let spdx = export_spdx(&a, &policy, false).unwrap();
    assert_eq!(recover_spdx_fields(&spdx).unwrap(), expected);
    let cdx = export_cdx(&a, &policy, false).unwrap();
    assert_eq!(recover_cdx_fields(&cdx).unwrap(), expected);

    // The manifest and inventory land natively in CycloneDX.
    assert!(!cdx["metadata"]["component"]["hashes"]
        .as_array()
        .unwrap()
        .is_empty());
}

#[test]
fn scanned_artifact_round_trips_too() {
    let tmp = tempfile::tempdir().unwrap();
    make_fixture(FixtureCase::Guard, tmp.path()).unwrap();
    let a = run_scan(&ScanRequest::new(tmp.path())).unwrap().artifact;
    let policy = PolicyConfig::default();
    let expected = present_values(&a);
    assert_eq!(
        recover_spdx_fields(&export_spdx(&a, &policy, true).unwrap()).unwrap(),
        expected
    );
    assert_eq!(
        recover_cdx_fields(&export_cdx(&a, &policy, true).unwrap()).unwrap(),
        expected
    );
}
