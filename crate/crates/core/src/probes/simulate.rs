use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::roc::{Label, ScoreRecord};

/// Synthetic contamination probe: `n_per_class` out-of-training scores from
/// N(0, 1) and `n_per_class` in-training scores from N(shift, 1), seeded.
/// TN and TP draws come from one stream, TN first.
pub fn simulate_contamination(n_per_class: usize, shift: f64, seed: u64) -> Vec<ScoreRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tn = Normal::new(0.0, 1.0).expect("unit normal");
    let tp = Normal::new(shift, 1.0).expect("finite shift");
    let mut out = Vec::with_capacity(2 * n_per_class);
    for i in 0..n_per_class {
        out.push(ScoreRecord::new(
            format!("tn-{i:04}"),
            Label::TN,
            tn.sample(&mut rng),
        ));
    }
    for i in 0..n_per_class {
        out.push(ScoreRecord::new(
            format!("tp-{i:04}"),
            Label::TP,
            tp.sample(&mut rng),
        ));
    }
    out
}
