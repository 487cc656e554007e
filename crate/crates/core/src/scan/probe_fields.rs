//! Turns probe logs into runtime-probe evidence fields and report rows.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::evidence::{Confidence, FieldRecord, VerifiabilityBlock};
use crate::packaging::Finding;
use crate::probes::{
    anova_oneway, backdoor_asr, budget_key, edd_summary, load_probe_input, roc_auc, Label,
    LoadedProbeLog, ProbeInput, ProbeLog, RunMetadata, ScoreRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSource {
    /// Computed here from raw scores.
    Computed,
    /// Ingested from a summary log as reported by its producer.
    Reported,
}

/// One row of the probe-metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub probe: String,
    pub auc: f64,
    pub tpr_at_5_fpr: Option<f64>,
    pub n: Option<u64>,
    pub source: MetricSource,
}

#[derive(Debug, Default)]
pub struct ProbeEvidence {
    pub records: Vec<FieldRecord>,
    pub rows: Vec<ProbeRow>,
    pub findings: Vec<Finding>,
}

fn metadata_value(m: Option<&RunMetadata>) -> Value {
    match m {
        Some(m) => {
            json!({"method": m.method, "params": m.params, "seed": m.seed, "model_id": m.model_id})
        }
        None => Value::Null,
    }
}

/// ANOVA over the `group` field when every record has one and at least two
/// groups exist, otherwise TP versus TN.
fn score_anova(records: &[ScoreRecord]) -> Value {
    let mut by_group: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let grouped = records.iter().all(|r| r.group.is_some());
    for r in records {
        let key = match (&r.group, grouped) {
            (Some(g), true) => g.as_str(),
            _ if r.label == Label::TP => "TP",
            _ => "TN",
        };
        by_group.entry(key).or_default().push(r.score);
    }
    let (grouped, by_group) = if grouped && by_group.len() >= 2 {
        (true, by_group)
    } else {
        let mut by_label: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for r in records {
            by_label
                .entry(if r.label == Label::TP { "TP" } else { "TN" })
                .or_default()
                .push(r.score);
        }
        (false, by_label)
    };
    let names: Vec<&str> = by_group.keys().copied().collect();
    let groups: Vec<Vec<f64>> = by_group.into_values().collect();
    let by = if grouped { "group" } else { "label" };
    match anova_oneway(&groups) {
        Ok(a) => json!({"by": by, "groups": names, "result": a}),
        Err(e) => json!({"by": by, "groups": names, "error": e.to_string()}),
    }
}

fn degenerate(log: &LoadedProbeLog, e: impl std::fmt::Display) -> Finding {
    Finding::warn(
        "probe.degenerate",
        None,
        &log.name,
        format!("probe log {} gives no metric: {e}", log.name),
    )
}

/// Loads every probe input and derives fields 4.1 to 4.3. Unreadable or
/// degenerate logs become Warn findings.
pub fn probe_evidence(paths: &[PathBuf]) -> ProbeEvidence {
    let mut out = ProbeEvidence::default();
    let mut methods = Vec::new();
    let mut outputs = Vec::new();
    let mut sweeps = Vec::new();
    let mut any_reported = false;

    for path in paths {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let log = match load_probe_input(path) {
            Ok(ProbeInput::Log(log)) => log,
            Ok(ProbeInput::Metadata(m)) => {
                methods.push(json!({"probe": m.method, "kind": "metadata", "log": name, "metadata": metadata_value(Some(&m))}));
                continue;
            }
            Err(e) => {
                out.findings.push(Finding::warn(
                    "probe.log_error",
                    None,
                    &name,
                    format!("cannot read probe log: {e}"),
                ));
                continue;
            }
        };
        let label = log.label();
        methods.push(json!({
            "probe": label,
            "kind": log.log.kind(),
            "log": log.name,
            "log_sha256": log.sha256,
            "records": log.log.len(),
            "metadata": metadata_value(log.metadata.as_ref()),
        }));
        let base = json!({"probe": label, "log": log.name, "log_sha256": log.sha256});
        let with = |extra: Value| {
            let mut v = base.clone();
            v.as_object_mut()
                .expect("object")
                .extend(extra.as_object().expect("object").clone());
            v
        };
        match &log.log {
            ProbeLog::Scores(records) => match roc_auc(records) {
                Ok(roc) => {
                    out.rows.push(ProbeRow {
                        probe: label.clone(),
                        auc: roc.auc,
                        tpr_at_5_fpr: roc.tpr_at_fpr.get(&budget_key(0.05)).copied(),
                        n: Some(roc.n_pos + roc.n_neg),
                        source: MetricSource::Computed,
                    });
                    outputs.push(with(
                        json!({"kind": "scores", "roc": roc, "anova": score_anova(records)}),
                    ));
                }
                Err(e) => out.findings.push(degenerate(&log, e)),
            },
            ProbeLog::Edd(records) => match edd_summary(records) {
                Ok(s) => outputs.push(with(json!({"kind": "edd", "edd": s}))),
                Err(e) => out.findings.push(degenerate(&log, e)),
            },
            ProbeLog::Backdoor(trials) => match backdoor_asr(trials) {
                Ok(s) => sweeps.push(with(json!({
                    "n_triggered": s.n_triggered,
                    "n_control": s.n_control,
                    "asr_triggered": s.asr_triggered,
                    "asr_control": s.asr_control,
                    "delta": s.delta,
                }))),
                Err(e) => out.findings.push(degenerate(&log, e)),
            },
            ProbeLog::Summary(records) => {
                any_reported = true;
                for r in records {
                    out.rows.push(ProbeRow {
                        probe: r.probe.clone(),
                        auc: r.auc,
                        tpr_at_5_fpr: r.tpr_at_fpr.get(&budget_key(0.05)).copied(),
                        n: r.n,
                        source: MetricSource::Reported,
                    });
                }
                outputs.push(with(json!({"kind": "summary", "reported": records})));
            }
        }
    }

    if !methods.is_empty() {
        out.records.push(FieldRecord::with_verifiability(
            "detector_method",
            json!({"probes": methods}),
            VerifiabilityBlock::third_party(
                None,
                Confidence::Medium,
                "probe runs described by their logs and run metadata",
            ),
        ));
    }
    if !outputs.is_empty() {
        let verifiability = if any_reported {
            VerifiabilityBlock::third_party(
                None,
                Confidence::Medium,
                "includes metrics reported by the probe producer",
            )
        } else {
            VerifiabilityBlock::measured("metrics computed from probe log records")
        };
        out.records.push(FieldRecord::with_verifiability(
            "detector_outputs",
            json!({"probes": outputs}),
            verifiability,
        ));
    }
    if !sweeps.is_empty() {
        out.records.push(FieldRecord::measured(
            "backdoor_probe_results",
            json!({"sweeps": sweeps}),
            "attack success rates computed from trigger sweep logs",
        ));
    }
    out
}
