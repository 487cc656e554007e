//! Pickle scanner against a corpus written by CPython's pickle module.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use airscan_core::packaging::pickle::disassemble;
use airscan_core::packaging::{scan_pickle_container, scan_pickle_stream, Severity};
use serde::Deserialize;

#[derive(Deserialize)]
struct Expected {
    critical: bool,
    globals: Vec<String>,
}

#[derive(Deserialize)]
struct Oracle {
    sentinel: String,
    files: BTreeMap<String, Expected>,
}

fn data() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn oracle() -> Oracle {
    serde_json::from_slice(&fs::read(data().join("pickle_oracle.json")).unwrap()).unwrap()
}

#[test]
fn corpus_matches_expected_verdicts_and_globals() {
    let o = oracle();
    let (benign, malicious): (Vec<_>, Vec<_>) = o.files.iter().partition(|(_, e)| !e.critical);
    assert_eq!((benign.len(), malicious.len()), (20, 5));
    for (name, expected) in &o.files {
        let bytes = fs::read(data().join("pickles").join(name)).unwrap();
        let findings = scan_pickle_stream(&bytes).unwrap();
        let critical = findings.iter().any(|f| f.severity == Severity::Critical);
        assert_eq!(critical, expected.critical, "{name}: {findings:?}");
        assert_eq!(
            disassemble(&bytes).unwrap().globals,
            expected.globals,
            "{name}"
        );
    }
}

#[test]
fn every_protocol_is_covered() {
    let names: Vec<String> = oracle().files.into_keys().collect();
    for p in 0..=5 {
        assert!(
            names
                .iter()
                .any(|n| n.starts_with("benign") && n.ends_with(&format!("_p{p}.pkl"))),
            "protocol {p}"
        );
    }
}

/// Runs every malicious payload through both entry points, with the working
/// directory set to an empty temp dir. A payload that ran would create the
/// sentinel file there (the committed payloads use a relative path) or at the
/// absolute path baked into the extra stream below.
#[test]
fn scanning_never_executes_payloads() {
    let o = oracle();
    let tmp = tempfile::tempdir().unwrap();
    let absolute = tmp.path().join("absolute_sentinel");
    let cmd = format!("touch {}", absolute.display());
    let mut extra = b"\x80\x02cposix\nsystem\nX".to_vec();
    extra.extend((cmd.len() as u32).to_le_bytes());
    extra.extend(cmd.as_bytes());
    extra.extend(b"\x85R.");

    let mut streams: Vec<(String, Vec<u8>)> = o
        .files
        .iter()
        .filter(|(_, e)| e.critical)
        .map(|(n, _)| (n.clone(), fs::read(data().join("pickles").join(n)).unwrap()))
        .collect();
    streams.push(("absolute".into(), extra));

    let previous = std::env::current_dir().unwrap();
    std::env::set_current_dir(tmp.path()).unwrap();
    for (name, bytes) in &streams {
        assert!(
            scan_pickle_stream(bytes)
                .unwrap()
                .iter()
                .any(|f| f.severity == Severity::Critical),
            "{name}"
        );
        let zip_path = tmp.path().join(format!("{name}.pt"));
        let mut zw = zip::ZipWriter::new(fs::File::create(&zip_path).unwrap());
        zw.start_file("archive/data.pkl", zip::write::SimpleFileOptions::default())
            .unwrap();
        zw.write_all(bytes).unwrap();
        zw.finish().unwrap();
        let report = scan_pickle_container(&zip_path, "x.pt").unwrap();
        assert!(
            report
                .findings
                .iter()
                .any(|f| f.severity == Severity::Critical),
            "{name} in zip"
        );
    }
    std::env::set_current_dir(previous).unwrap();

    assert!(!tmp.path().join(&o.sentinel).exists());
    assert!(!absolute.exists());
}
