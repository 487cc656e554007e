use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ProbeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    /// In-training item.
    TP,
    /// Out-of-training item.
    TN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub item_id: String,
    pub label: Label,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl ScoreRecord {
    pub fn new(item_id: impl Into<String>, label: Label, score: f64) -> Self {
        ScoreRecord {
            item_id: item_id.into(),
            label,
            score,
            group: None,
        }
    }
}

pub const DEFAULT_FPR_BUDGETS: [f64; 1] = [0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub auc: f64,
    /// Budget (shortest decimal form, e.g. `"0.05"`) → TPR.
    pub tpr_at_fpr: BTreeMap<String, f64>,
    pub n_pos: u64,
    pub n_neg: u64,
    /// Operating points `(fpr, tpr)` from `(0,0)` to `(1,1)`, one per distinct score.
    pub curve: Vec<(f64, f64)>,
}

pub fn budget_key(budget: f64) -> String {
    format!("{budget}")
}

/// ROC curve and AUC with TPR at the default 5% FPR budget.
pub fn roc_auc(records: &[ScoreRecord]) -> Result<RocSummary, ProbeError> {
    roc_auc_with_budgets(records, &DEFAULT_FPR_BUDGETS)
}

/// Scores are ranked descending (higher = more likely in-training). Tied scores
/// form one step, so the area equals the pairwise rule with ties counting ½.
pub fn roc_auc_with_budgets(
    records: &[ScoreRecord],
    budgets: &[f64],
) -> Result<RocSummary, ProbeError> {
    if let Some(r) = records.iter().find(|r| !r.score.is_finite()) {
        return Err(ProbeError::DegenerateInput(format!(
            "score of {} is not finite",
            r.item_id
        )));
    }
    let n_pos = records.iter().filter(|r| r.label == Label::TP).count() as u64;
    let n_neg = records.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ProbeError::DegenerateLabels(format!(
            "need both labels, got {n_pos} TP and {n_neg} TN"
        )));
    }
    let mut sorted: Vec<(f64, Label)> = records.iter().map(|r| (r.score, r.label)).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the area in units of one (positive, negative) pair; exact in integers.
    let mut area2: u128 = 0;
    let mut curve = vec![(0.0, 0.0)];
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        let (mut dtp, mut dfp) = (0u64, 0u64);
        while i < sorted.len() && sorted[i].0 == score {
            match sorted[i].1 {
                Label::TP => dtp += 1,
                Label::TN => dfp += 1,
            }
            i += 1;
        }
        area2 += dfp as u128 * (2 * tp as u128 + dtp as u128);
        tp += dtp;
        fp += dfp;
        curve.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    let auc = area2 as f64 / (2.0 * n_pos as f64 * n_neg as f64);
    let mut summary = RocSummary {
        auc,
        tpr_at_fpr: BTreeMap::new(),
        n_pos,
        n_neg,
        curve,
    };
    for &b in budgets {
        let t = tpr_at_fpr(&summary, b);
        summary.tpr_at_fpr.insert(budget_key(b), t);
    }
    Ok(summary)
}

/// Largest TPR among operating points whose FPR is within `budget`; no interpolation.
pub fn tpr_at_fpr(summary: &RocSummary, budget: f64) -> f64 {
    summary
        .curve
        .iter()
        .filter(|(fpr, _)| *fpr <= budget)
        .map(|&(_, tpr)| tpr)
        .fold(0.0, f64::max)
}

/// Trapezoidal area under a curve of `(x, y)` points.
pub fn trapezoid_area(curve: &[(f64, f64)]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(tp: &[f64], tn: &[f64]) -> Vec<ScoreRecord> {
        tp.iter()
            .enumerate()
            .map(|(i, &s)| ScoreRecord::new(format!("p{i}"), Label::TP, s))
            .chain(
                tn.iter()
                    .enumerate()
                    .map(|(i, &s)| ScoreRecord::new(format!("n{i}"), Label::TN, s)),
            )
            .collect()
    }

    #[test]
    fn perfect_separation() {
        let s = roc_auc(&recs(&[0.9, 0.8], &[0.1, 0.2])).unwrap();
        assert_eq!(s.auc, 1.0);
        assert_eq!(s.tpr_at_fpr["0.05"], 1.0);
        assert_eq!(s.curve.first(), Some(&(0.0, 0.0)));
        assert_eq!(s.curve.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn mixed_four_points() {
        let s = roc_auc(&recs(&[0.9, 0.1], &[0.8, 0.2])).unwrap();
        assert_eq!(s.auc, 0.5);
        assert_eq!(s.tpr_at_fpr["0.05"], 0.5);
        assert_eq!(tpr_at_fpr(&s, 1.0), 1.0);
        assert_eq!(tpr_at_fpr(&s, 0.5), 0.5);
    }

    #[test]
    fn ties_get_half_credit() {
        let s = roc_auc(&recs(&[0.5], &[0.5])).unwrap();
        assert_eq!(s.auc, 0.5);
        assert_eq!(s.curve, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(trapezoid_area(&s.curve), s.auc);
    }

    #[test]
    fn degenerate_labels() {
        assert!(matches!(
            roc_auc(&recs(&[0.1], &[])),
            Err(ProbeError::DegenerateLabels(_))
        ));
        assert!(matches!(
            roc_auc(&recs(&[], &[0.1])),
            Err(ProbeError::DegenerateLabels(_))
        ));
        assert!(matches!(
            roc_auc(&recs(&[f64::NAN], &[0.1])),
            Err(ProbeError::DegenerateInput(_))
        ));
    }

    #[test]
    fn budget_keys() {
        assert_eq!(budget_key(0.05), "0.05");
        assert_eq!(budget_key(0.1), "0.1");
    }
}
