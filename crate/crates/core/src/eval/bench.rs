use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Groups, MultilevelDataset};
use crate::error::Result;
use crate::linalg::Factor;
use crate::mfvb::{fit, input_bytes, random_dim, FitMode, FitOptions, PriorSpec, NAIVE_DIM_GUARD};

/// Column order of the bench CSV.
pub const BENCH_HEADER: [&str; 13] = [
    "m",
    "p_s",
    "n_obs",
    "dim",
    "sweeps",
    "streamlined_s",
    "naive_s",
    "naive_estimated",
    "time_ratio",
    "streamlined_mb",
    "naive_mb",
    "memory_ratio",
    "depth",
];

/// One timing and storage comparison at a fixed number of sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub m: usize,
    pub p_s: usize,
    pub n_obs: usize,
    /// dim(β, u)
    pub dim: usize,
    pub sweeps: usize,
    pub streamlined_s: f64,
    pub naive_s: f64,
    /// True when the naive mode was not run and `naive_s` is a lower-bound
    /// estimate, so `time_ratio` is a lower bound too.
    pub naive_estimated: bool,
    pub time_ratio: f64,
    pub streamlined_mb: f64,
    pub naive_mb: f64,
    pub memory_ratio: f64,
    pub depth: String,
}

impl BenchRow {
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.m.to_string(),
            self.p_s.to_string(),
            self.n_obs.to_string(),
            self.dim.to_string(),
            self.sweeps.to_string(),
            self.streamlined_s.to_string(),
            self.naive_s.to_string(),
            self.naive_estimated.to_string(),
            self.time_ratio.to_string(),
            self.streamlined_mb.to_string(),
            self.naive_mb.to_string(),
            self.memory_ratio.to_string(),
            self.depth.clone(),
        ]
    }
}

/// Largest dense factorization timed directly when estimating a skipped
/// naive run.
const PROBE_DIM: usize = 1500;

/// Seconds for one dense Cholesky factorization and inversion of a
/// dim × dim SPD matrix; above `PROBE_DIM` the time at `PROBE_DIM` is
/// scaled by (dim/PROBE_DIM)³. Every naive sweep performs at least this work.
fn dense_inverse_seconds(dim: usize) -> f64 {
    let k = dim.min(PROBE_DIM);
    let a = DMatrix::from_fn(k, k, |i, j| if i == j { k as f64 } else { 1.0 / (1.0 + (i + j) as f64) });
    let start = Instant::now();
    let f = Factor::new(&a).expect("diagonally dominant probe matrix");
    let inv = f.inverse();
    std::hint::black_box(&inv);
    let t = start.elapsed().as_secs_f64();
    t * (dim as f64 / k as f64).powi(3)
}

/// Time `sweeps` sweeps of each mode from the same initial state. The naive
/// mode runs only when `run_naive` is set and dim(β, u) is within the guard;
/// otherwise its time is replaced by a lower-bound estimate.
pub fn bench(ds: &MultilevelDataset, prior: &PriorSpec, sweeps: usize, run_naive: bool) -> Result<BenchRow> {
    let dim = ds.p() + random_dim(ds);
    let opts = |mode| FitOptions { max_iters: sweeps, rel_change_tol: 0.0, mode, track_trace: false, force: true };
    let streamlined = fit(ds, prior, &opts(FitMode::Streamlined))?;
    let (naive_s, naive_estimated) = if run_naive && dim <= NAIVE_DIM_GUARD {
        (fit(ds, prior, &opts(FitMode::Naive))?.wall_time_s, false)
    } else {
        (sweeps as f64 * dense_inverse_seconds(dim), true)
    };
    let mb = |mode| input_bytes(ds, mode) as f64 / (1024.0 * 1024.0);
    let (s_mb, n_mb) = (mb(FitMode::Streamlined), mb(FitMode::Naive));
    let depth = match ds.groups {
        Groups::Two { .. } => "two",
        Groups::Three { .. } => "three",
    };
    Ok(BenchRow {
        m: ds.m(),
        p_s: ds.p_s,
        n_obs: ds.n_obs(),
        dim,
        sweeps,
        streamlined_s: streamlined.wall_time_s,
        naive_s,
        naive_estimated,
        time_ratio: naive_s / streamlined.wall_time_s,
        streamlined_mb: s_mb,
        naive_mb: n_mb,
        memory_ratio: n_mb / s_mb,
        depth: depth.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{simulate, SimConfig, SizeRule};
    use crate::mfvb::PriorFamily;

    #[test]
    fn row_shapes_and_memory() {
        let cfg = SimConfig::study(4, SizeRule::Fixed(2), SizeRule::Fixed(3), 12);
        let (ds, _) = simulate(&cfg).unwrap();
        let prior = PriorSpec::diffuse(&ds, PriorFamily::Horseshoe);
        let row = bench(&ds, &prior, 2, true).unwrap();
        assert!(!row.naive_estimated);
        assert_eq!(row.dim, 17 + 4 * (2 + 2 * 2));
        // 24 rows; streamlined keeps X, Z1, Z2 per block, naive the stacked C.
        let n = 24.0 * 8.0 / (1024.0 * 1024.0);
        assert!((row.streamlined_mb - n * (17.0 + 4.0 + 1.0)).abs() < 1e-12);
        assert!((row.naive_mb - n * (17.0 + 24.0 + 1.0)).abs() < 1e-12);
        assert_eq!(row.csv_record().len(), BENCH_HEADER.len());

        let skipped = bench(&ds, &prior, 2, false).unwrap();
        assert!(skipped.naive_estimated && skipped.naive_s > 0.0);
    }
}
