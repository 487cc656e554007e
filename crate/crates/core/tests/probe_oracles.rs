//! Probe metrics compared with frozen scipy, sklearn and pure-Python results.

use std::path::PathBuf;

use airscan_core::probes::{
    anova_oneway, backdoor_asr, edd_summary, levenshtein, load_probe_input, normalized_levenshtein,
    roc_auc, simulate_contamination, EddGroup, Label, ProbeInput, ProbeLog, ScoreRecord,
};
use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn oracle(name: &str) -> Value {
    serde_json::from_slice(&std::fs::read(data(name)).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

fn records(pos: &[f64], neg: &[f64]) -> Vec<ScoreRecord> {
    let tp = pos
        .iter()
        .enumerate()
        .map(|(i, &s)| ScoreRecord::new(format!("p{i}"), Label::TP, s));
    let tn = neg
        .iter()
        .enumerate()
        .map(|(i, &s)| ScoreRecord::new(format!("n{i}"), Label::TN, s));
    tp.chain(tn).collect()
}

#[test]
fn anova_matches_scipy() {
    let o = oracle("anova_oracle.json");
    let cases = o["cases"].as_array().unwrap();
    assert_eq!(cases.len(), 50);
    for (i, c) in cases.iter().enumerate() {
        let groups: Vec<Vec<f64>> = c["groups"].as_array().unwrap().iter().map(floats).collect();
        let r = anova_oneway(&groups).unwrap();
        let (f, p) = (c["f"].as_f64().unwrap(), c["p"].as_f64().unwrap());
        assert!(
            (r.f_stat - f).abs() <= 1e-6 * f.max(1.0),
            "case {i}: F {} vs {f}",
            r.f_stat
        );
        assert!(
            (r.p_value - p).abs() <= 1e-6,
            "case {i}: p {} vs {p}",
            r.p_value
        );
    }
}

#[test]
fn anova_identical_groups() {
    let g = vec![1.0, 2.0, 3.5];
    let r = anova_oneway(&[g.clone(), g.clone(), g]).unwrap();
    assert_eq!((r.f_stat, r.p_value), (0.0, 1.0));
}

#[test]
fn auc_matches_sklearn_with_ties() {
    for c in oracle("roc_oracle.json")["cases"].as_array().unwrap() {
        let r = roc_auc(&records(&floats(&c["pos"]), &floats(&c["neg"]))).unwrap();
        assert!((r.auc - c["auc"].as_f64().unwrap()).abs() < 1e-12, "{c}");
    }
}

#[test]
fn levenshtein_matches_reference_dp() {
    let o = oracle("levenshtein_oracle.json");
    for p in o["pairs"].as_array().unwrap() {
        let (a, b) = (p["a"].as_str().unwrap(), p["b"].as_str().unwrap());
        assert_eq!(
            levenshtein(a, b) as u64,
            p["distance"].as_u64().unwrap(),
            "{a:?} / {b:?}"
        );
    }
    assert_eq!(normalized_levenshtein("kitten", "sitting"), 3.0 / 7.0);
}

#[test]
fn simulation_auc_within_monte_carlo_bounds() {
    let o = oracle("simulation_oracle.json");
    let n = o["n_per_class"].as_u64().unwrap() as usize;
    let auc = roc_auc(&simulate_contamination(n, o["shift"].as_f64().unwrap(), 0))
        .unwrap()
        .auc;
    let lo = o["accept_low"]
        .as_f64()
        .unwrap()
        .max(o["q0001"].as_f64().unwrap());
    let hi = o["accept_high"]
        .as_f64()
        .unwrap()
        .min(o["q9999"].as_f64().unwrap());
    assert!((lo..=hi).contains(&auc), "auc {auc} outside [{lo}, {hi}]");
}

fn log(name: &str) -> airscan_core::probes::LoadedProbeLog {
    match load_probe_input(&data(&format!("probe_logs/{name}"))).unwrap() {
        ProbeInput::Log(l) => l,
        ProbeInput::Metadata(_) => panic!("{name} is a log"),
    }
}

#[test]
fn committed_scorer_logs_parse_and_match_oracle() {
    let o = oracle("probe_logs_oracle.json");

    let scores = log("logprobs.jsonl");
    assert_eq!(scores.label(), "logprob");
    assert_eq!(
        scores.metadata.as_ref().unwrap().model_id,
        "tiny-public-model"
    );
    let ProbeLog::Scores(recs) = &scores.log else {
        panic!("scores")
    };
    assert!((roc_auc(recs).unwrap().auc - o["logprobs_auc"].as_f64().unwrap()).abs() < 1e-12);
    let pos: Vec<f64> = recs
        .iter()
        .filter(|r| r.label == Label::TP)
        .map(|r| r.score)
        .collect();
    let neg: Vec<f64> = recs
        .iter()
        .filter(|r| r.label == Label::TN)
        .map(|r| r.score)
        .collect();
    let a = anova_oneway(&[pos, neg]).unwrap();
    assert!((a.f_stat - o["logprobs_anova"]["f"].as_f64().unwrap()).abs() < 1e-9);
    assert!((a.p_value - o["logprobs_anova"]["p"].as_f64().unwrap()).abs() < 1e-9);

    let ProbeLog::Edd(edd) = log("edd.jsonl").log else {
        panic!("edd")
    };
    let s = edd_summary(&edd).unwrap();
    for (g, key) in [
        (EddGroup::Clean, "clean"),
        (EddGroup::Contaminated, "contaminated"),
    ] {
        assert!((s.groups[&g].mean - o["edd_mean_distance"][key].as_f64().unwrap()).abs() < 1e-12);
    }
    assert!(s.separation > 0.0);

    let ProbeLog::Backdoor(trials) = log("backdoor.jsonl").log else {
        panic!("backdoor")
    };
    let b = backdoor_asr(&trials).unwrap();
    assert_eq!(
        (b.asr_triggered, b.asr_control),
        (
            o["asr_triggered"].as_f64().unwrap(),
            o["asr_control"].as_f64().unwrap()
        )
    );

    let ProbeLog::Summary(rows) = log("summary.jsonl").log else {
        panic!("summary")
    };
    let got: Vec<(f64, f64)> = rows.iter().map(|r| (r.auc, r.tpr_at_fpr["0.05"])).collect();
    assert_eq!(got, [(0.512, 0.267), (0.646, 0.5)]);
}
