//! Simulation study harness: data generation, accuracy against Gibbs draws,
//! selection scores and the timing/memory comparison.

mod accuracy;
mod bench;
mod report;
mod sim;

pub use accuracy::{accuracy_against_draws, accuracy_index, trapezoid, Marginal, MIN_GRID_MASS};
pub use bench::{bench, BenchRow, BENCH_HEADER};
pub use report::{
    evaluate, marginals, AccuracyEntry, AccuracySummary, EvalConfig, EvalReport, PriorRun, PriorSummary,
    ReplicateReport, SCHEMA_VERSION,
};
pub use sim::{simulate, GroundTruth, SimConfig, SizeRule, STUDY_BETA_S_SIGNALS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts and scores (percent) for a binary selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionScore {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// F1 = 2TP/(2TP + FP + FN), in percent. A problem with nothing to find and
/// nothing selected scores 100.
pub fn f1_score(gamma: &[bool], truth_nonzero: &[bool]) -> Result<SelectionScore> {
    if gamma.len() != truth_nonzero.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} selection flags for {} truths",
            gamma.len(),
            truth_nonzero.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&g, &t) in gamma.iter().zip(truth_nonzero) {
        match (g, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = 100.0 * ratio(2 * tp, 2 * tp + fp + fn_);
    Ok(SelectionScore { tp, fp, tn, fn_, precision, recall, f1 })
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
