use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::levenshtein::normalized_levenshtein;
use super::ProbeError;

pub const EDD_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EddGroup {
    Contaminated,
    Clean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EddRecord {
    pub item_id: String,
    pub group: EddGroup,
    #[serde(rename = "baseline")]
    pub baseline_text: String,
    pub samples: Vec<String>,
    #[serde(default)]
    pub distances: Vec<f64>,
}

impl EddRecord {
    /// Builds a record and computes each sample's distance to the baseline.
    pub fn new(
        item_id: impl Into<String>,
        group: EddGroup,
        baseline: impl Into<String>,
        samples: Vec<String>,
    ) -> Self {
        let baseline_text = baseline.into();
        let distances = samples
            .iter()
            .map(|s| normalized_levenshtein(&baseline_text, s))
            .collect();
        EddRecord {
            item_id: item_id.into(),
            group,
            baseline_text,
            samples,
            distances,
        }
    }

    pub fn with_distances(mut self) -> Self {
        self.distances = self
            .samples
            .iter()
            .map(|s| normalized_levenshtein(&self.baseline_text, s))
            .collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EddGroupSummary {
    pub records: usize,
    pub distances: usize,
    pub mean: f64,
    pub median: f64,
    /// Counts over `[0,1]` in 20 equal bins; 1.0 lands in the last bin.
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EddSummary {
    pub groups: BTreeMap<EddGroup, EddGroupSummary>,
    /// mean(clean) − mean(contaminated); positive when contaminated items are more repetitive.
    pub separation: f64,
}

pub fn histogram_bin(d: f64) -> usize {
    ((d * EDD_BINS as f64).floor() as usize).min(EDD_BINS - 1)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Per-group distribution of sample distances, pooled over records.
pub fn edd_summary(records: &[EddRecord]) -> Result<EddSummary, ProbeError> {
    let mut pooled: BTreeMap<EddGroup, (usize, Vec<f64>)> = BTreeMap::new();
    for r in records {
        if r.distances.len() != r.samples.len() {
            return Err(ProbeError::DegenerateInput(format!(
                "record {} has unscored samples",
                r.item_id
            )));
        }
        let e = pooled.entry(r.group).or_default();
        e.0 += 1;
        e.1.extend(&r.distances);
    }
    for g in [EddGroup::Contaminated, EddGroup::Clean] {
        if pooled.get(&g).is_none_or(|(_, d)| d.is_empty()) {
            return Err(ProbeError::DegenerateLabels(format!("no {g:?} distances")));
        }
    }
    let mut groups = BTreeMap::new();
    for (g, (n_records, mut ds)) in pooled {
        ds.sort_by(f64::total_cmp);
        let mut histogram = vec![0u64; EDD_BINS];
        ds.iter().for_each(|&d| histogram[histogram_bin(d)] += 1);
        groups.insert(
            g,
            EddGroupSummary {
                records: n_records,
                distances: ds.len(),
                mean: ds.iter().sum::<f64>() / ds.len() as f64,
                median: median(&ds),
                histogram,
            },
        );
    }
    let separation = groups[&EddGroup::Clean].mean - groups[&EddGroup::Contaminated].mean;
    Ok(EddSummary { groups, separation })
}
