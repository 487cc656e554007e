//! Runtime-probe metrics computed from probe logs: ROC/AUC and TPR at an FPR
//! budget, one-way ANOVA, edit-distance distributions and backdoor attack
//! success rates. Outputs are triage evidence; nothing here accepts or rejects
//! a model.

mod anova;
mod backdoor;
mod edd;
mod levenshtein;
mod logs;
mod roc;
mod simulate;

use std::io;

use thiserror::Error;

pub use anova::{anova_oneway, f_upper_tail, ln_gamma, regularized_incomplete_beta, AnovaResult};
pub use backdoor::{backdoor_asr, BackdoorSweep, BackdoorTrial};
pub use edd::{
    edd_summary, histogram_bin, EddGroup, EddGroupSummary, EddRecord, EddSummary, EDD_BINS,
};
pub use levenshtein::{levenshtein, normalized_levenshtein};
pub use logs::{
    load_probe_input, parse_probe_log, parse_run_metadata, sidecar_path, LoadedProbeLog,
    ProbeInput, ProbeLog, ProbeSummaryRecord, RunMetadata,
};
pub use roc::{
    budget_key, roc_auc, roc_auc_with_budgets, tpr_at_fpr, trapezoid_area, Label, RocSummary,
    ScoreRecord, DEFAULT_FPR_BUDGETS,
};
pub use simulate::simulate_contamination;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("{path}:{line}: {reason}")]
    Log {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}
