//! Rendering and writing scan outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::json;

use super::{PipelineError, ScanReport};
use crate::canonical::to_canonical_bytes as canonical_bytes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Json,
    Text,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            other => Err(format!(
                "unknown report format {other:?} (expected json or text)"
            )),
        }
    }
}

/// File-name stem for a model's outputs: the model name with anything outside
/// `[A-Za-z0-9._-]` replaced by `_`.
pub fn output_stem(report: &ScanReport) -> String {
    let stem: String = report
        .artifact
        .subject()
        .model_name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if stem.is_empty() || stem.chars().all(|c| c == '.') {
        "model".into()
    } else {
        stem
    }
}

fn fmt_metric(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into())
}

fn table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    out.push_str(&line(header.to_vec()));
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
}

fn render_text(report: &ScanReport) -> String {
    let a = &report.artifact;
    let s = a.subject();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "model:   {} ({}) {}",
        s.model_name, s.model_id, s.version_or_commit
    );
    let _ = writeln!(out, "digest:  {}", a.canonical_digest());
    let _ = writeln!(out, "lint:    {:?}", report.lint.verdict);
    if !report.lint.missing_must.is_empty() {
        let _ = writeln!(
            out,
            "  missing Must:   {}",
            report.lint.missing_must.join(", ")
        );
    }
    if !report.lint.missing_should.is_empty() {
        let _ = writeln!(
            out,
            "  missing Should: {}",
            report.lint.missing_should.join(", ")
        );
    }
    let _ = writeln!(out, "exit:    {}\n", report.exit_code);

    out.push_str("Load-time guard\n");
    if report.guard_results.is_empty() {
        out.push_str("no weights artifacts\n");
    } else {
        let rows: Vec<Vec<String>> = report
            .guard_results
            .iter()
            .map(|g| vec![g.artifact_path.clone(), g.serialization.clone(), g.label()])
            .collect();
        table(&mut out, &["Artifact", "Serialization", "Outcome"], &rows);
    }

    if !report.probe_rows.is_empty() {
        out.push_str("\nProbe metrics\n");
        let rows: Vec<Vec<String>> = report
            .probe_rows
            .iter()
            .map(|r| {
                vec![
                    r.probe.clone(),
                    fmt_metric(Some(r.auc)),
                    fmt_metric(r.tpr_at_5_fpr),
                ]
            })
            .collect();
        table(&mut out, &["Probe", "AUC", "TPR @ 5% FPR"], &rows);
    }

    out.push_str("\nFindings\n");
    if report.findings.is_empty() {
        out.push_str("no findings\n");
    }
    for f in &report.findings {
        let threat = f
            .threat_ref
            .as_deref()
            .map(|t| format!(" [threat {t}]"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{:<8} {} {}: {}{threat}",
            format!("{:?}", f.severity).to_uppercase(),
            f.id,
            f.path,
            f.reason
        );
    }
    out
}

/// Report body. JSON is the canonical form of `{"artifact": ..., "findings": [...]}`;
/// guard results and lint inputs are already fields of the artifact.
pub fn render_report(report: &ScanReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Text => render_text(report).into_bytes(),
        ReportFormat::Json => {
            let artifact: serde_json::Value =
                serde_json::from_slice(&report.artifact.to_canonical_json())
                    .expect("artifact JSON parses");
            canonical_bytes(&json!({
                "artifact": artifact,
                "findings": report.findings,
            }))
        }
    }
}

/// Writes `<stem>.airs.json`, `<stem>.report.airs.{json,txt}` and any export
/// documents into `out_dir`. Returns the written paths.
pub fn write_outputs(
    report: &ScanReport,
    out_dir: &Path,
    format: ReportFormat,
) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| PipelineError::Io(format!("{}: {e}", out_dir.display())))?;
    let stem = output_stem(report);
    let mut files: Vec<(PathBuf, Vec<u8>)> = vec![
        (
            out_dir.join(format!("{stem}.airs.json")),
            report.artifact.to_canonical_json(),
        ),
        (
            out_dir.join(match format {
                ReportFormat::Json => format!("{stem}.report.airs.json"),
                ReportFormat::Text => format!("{stem}.report.airs.txt"),
            }),
            render_report(report, format),
        ),
    ];
    for (target, doc) in &report.exports {
        files.push((
            out_dir.join(format!("{stem}.{}", target.suffix())),
            canonical_bytes(doc),
        ));
    }
    let mut written = Vec::new();
    for (path, bytes) in files {
        fs::write(&path, bytes)
            .map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}
