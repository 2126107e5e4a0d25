//! Mean-field variational Bayes for Gaussian linear mixed models with two-
//! or three-level random effects and Gaussian, Laplace, Horseshoe or
//! Normal-Exponential-Gamma priors on the coefficients subject to selection.

mod engine;
mod prior;
mod state;

pub use engine::{update_local_scales, Engine, SystemWeights};
pub use prior::{CovariancePrior, PriorConfig, PriorFamily, PriorSpec};
pub use state::{init_state, CovarianceQ, Group3Q, GroupQ, RandomQ, ScalarQ, SubgroupQ, VariationalState, ZetaQ};

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Groups, MultilevelDataset};
use crate::error::{Error, Result};
use crate::linalg::{ThreeLevelSparseSystem, TwoLevelSparseSystem};
use crate::summary::CoefficientSummary;

/// Largest dim(β, u) a naive fit accepts without `force`.
pub const NAIVE_DIM_GUARD: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    Naive,
    #[default]
    Streamlined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iters: usize,
    pub rel_change_tol: f64,
    pub mode: FitMode,
    pub track_trace: bool,
    /// Allow naive fits above [`NAIVE_DIM_GUARD`].
    pub force: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iters: 200, rel_change_tol: 1e-3, mode: FitMode::Streamlined, track_trace: true, force: false }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub state: VariationalState,
    pub iterations: usize,
    pub converged: bool,
    /// Max relative parameter change after each sweep.
    pub trace: Vec<f64>,
    pub wall_time_s: f64,
    /// Bytes of data input held by the chosen mode.
    pub storage_bytes: usize,
}

/// Total dimension of u.
pub fn random_dim(ds: &MultilevelDataset) -> usize {
    match &ds.groups {
        Groups::Two { q, groups } => q * groups.len(),
        Groups::Three { q1, q2, groups } => groups.iter().map(|g| q1 + q2 * g.subgroups.len()).sum(),
    }
}

/// Bytes of data input each mode works from: per-block X, Z and y for the
/// streamlined mode; the stacked C = [X | Z], zero blocks included, and y for
/// the naive mode.
pub fn input_bytes(ds: &MultilevelDataset, mode: FitMode) -> usize {
    let f = std::mem::size_of::<f64>();
    let n = ds.n_obs();
    let p = ds.p();
    match mode {
        FitMode::Naive => (n * (p + random_dim(ds)) + n) * f,
        FitMode::Streamlined => {
            let cols = match &ds.groups {
                Groups::Two { q, .. } => p + q,
                Groups::Three { q1, q2, .. } => p + q1 + q2,
            };
            (n * cols + n) * f
        }
    }
}

pub fn build_two_level_system(
    ds: &MultilevelDataset,
    prior: &PriorSpec,
    state: &VariationalState,
) -> Result<TwoLevelSparseSystem> {
    Engine::new(ds, prior)?.build_two_level_system(state)
}

pub fn build_three_level_system(
    ds: &MultilevelDataset,
    prior: &PriorSpec,
    state: &VariationalState,
) -> Result<ThreeLevelSparseSystem> {
    Engine::new(ds, prior)?.build_three_level_system(state)
}

pub fn iterate_streamlined(
    ds: &MultilevelDataset,
    prior: &PriorSpec,
    state: &VariationalState,
) -> Result<VariationalState> {
    let mut next = state.clone();
    Engine::new(ds, prior)?.sweep_streamlined(&mut next)?;
    Ok(next)
}

pub fn iterate_naive(ds: &MultilevelDataset, prior: &PriorSpec, state: &VariationalState) -> Result<VariationalState> {
    let mut next = state.clone();
    Engine::new(ds, prior)?.with_dense().sweep_naive(&mut next)?;
    Ok(next)
}

/// Run sweeps until `max_iters` or until the max relative parameter change
/// drops below `rel_change_tol`.
pub fn fit(ds: &MultilevelDataset, prior: &PriorSpec, opts: &FitOptions) -> Result<FitResult> {
    if opts.max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
    }
    if !(opts.rel_change_tol >= 0.0) {
        return Err(Error::InvalidParameter("rel_change_tol must be nonnegative".into()));
    }
    let dim = ds.p() + random_dim(ds);
    if opts.mode == FitMode::Naive && dim > NAIVE_DIM_GUARD {
        if !opts.force {
            return Err(Error::Config(format!(
                "naive mode refused: dim(beta, u) = {dim} exceeds {NAIVE_DIM_GUARD}; pass --force to override"
            )));
        }
        log::warn!("naive fit with dim(beta, u) = {dim}; this may take very long");
    }
    let start = Instant::now();
    let mut engine = Engine::new(ds, prior)?;
    if opts.mode == FitMode::Naive {
        engine = engine.with_dense();
    }
    let mut state = init_state(ds, prior);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iters {
        let previous = state.clone();
        match opts.mode {
            FitMode::Streamlined => engine.sweep_streamlined(&mut state),
            FitMode::Naive => engine.sweep_naive(&mut state),
        }
        .map_err(|e| e.at_iteration(it))?;
        iterations = it;
        let change = state.max_relative_change(&previous);
        if opts.track_trace {
            trace.push(change);
        }
        if change < opts.rel_change_tol {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        state,
        iterations,
        converged,
        trace,
        wall_time_s: start.elapsed().as_secs_f64(),
        storage_bytes: input_bytes(ds, opts.mode),
    })
}

/// Gaussian-marginal summaries of β and u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummaries {
    pub beta: Vec<CoefficientSummary>,
    pub random: Vec<CoefficientSummary>,
}

pub fn posterior_summaries(ds: &MultilevelDataset, state: &VariationalState, level: f64) -> PosteriorSummaries {
    let sd = |m: &DMatrix<f64>, k: usize| m[(k, k)].max(0.0).sqrt();
    let beta = (0..ds.p())
        .map(|k| CoefficientSummary::gaussian(ds.names[k].clone(), state.mu_beta[k], sd(&state.sigma_beta, k), level))
        .collect();
    let mut random = Vec::new();
    let mut push = |label: String, mu: &DVector<f64>, sigma: &DMatrix<f64>| {
        for k in 0..mu.len() {
            random.push(CoefficientSummary::gaussian(format!("{label}[{k}]"), mu[k], sd(sigma, k), level));
        }
    };
    match (&ds.groups, &state.random) {
        (Groups::Two { groups, .. }, RandomQ::Two(qs)) => {
            for (g, q) in groups.iter().zip(qs) {
                push(format!("u[{}]", g.id), &q.mu, &q.sigma);
            }
        }
        (Groups::Three { groups, .. }, RandomQ::Three(qs)) => {
            for (g, q) in groups.iter().zip(qs) {
                push(format!("uL1[{}]", g.id), &q.mu, &q.sigma);
                for (s, sq) in g.subgroups.iter().zip(&q.subgroups) {
                    push(format!("uL2[{},{}]", g.id, s.id), &sq.mu, &sq.sigma);
                }
            }
        }
        _ => {}
    }
    PosteriorSummaries { beta, random }
}
