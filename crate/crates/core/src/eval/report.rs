use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    accuracy_against_draws, bench, f1_score, median, simulate, BenchRow, GroundTruth, Marginal, SelectionScore,
    SimConfig,
};
use crate::data::{
    destandardize_coefficients, standardize_selection_columns, Groups, MultilevelDataset, StandardizationRecord,
};
use crate::error::{Error, Result};
use crate::gibbs::{covariance_entry_name, gibbs_fit, GibbsOptions};
use crate::mfvb::{fit, posterior_summaries, FitOptions, PriorConfig, PriorFamily, RandomQ, VariationalState};
use crate::savs::savs;

/// Version tag carried by every JSON document the crate writes.
pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub sim: SimConfig,
    pub replicates: usize,
    /// Prior families fitted on every replicate.
    pub priors: Vec<String>,
    /// Hyperparameters shared by all families.
    pub prior: PriorConfig,
    pub fit: FitOptions,
    /// Standardize S columns before fitting; selection is always scored on
    /// the original scale.
    pub standardize: bool,
    /// Leading replicates that also get a Gibbs run and accuracy scores.
    pub accuracy_replicates: usize,
    pub accuracy_prior: String,
    pub gibbs: GibbsOptions,
    /// Sweeps for a timing comparison on the first replicate, if any.
    pub bench_sweeps: Option<usize>,
    /// Worker threads; 0 uses the available parallelism.
    pub threads: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            sim: SimConfig::default(),
            replicates: 10,
            priors: ["gaussian", "laplace", "horseshoe", "neg"].map(String::from).to_vec(),
            prior: PriorConfig::default(),
            fit: FitOptions::default(),
            standardize: false,
            accuracy_replicates: 3,
            accuracy_prior: "horseshoe".into(),
            gibbs: GibbsOptions {
                iters: 27_000,
                warmup: 2_000,
                thin: 5,
                seed: 1,
                record_groups: 3,
                record_auxiliary: false,
            },
            bench_sweeps: None,
            threads: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.priors.is_empty() {
            return Err(Error::Config("at least one prior family is required".into()));
        }
        for p in self.priors.iter().chain(std::iter::once(&self.accuracy_prior)) {
            self.family(p)?;
        }
        self.sim.validate()
    }

    fn family(&self, name: &str) -> Result<PriorFamily> {
        PriorConfig { family: name.to_string(), ..self.prior.clone() }.family()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorRun {
    pub prior: String,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    pub selection: SelectionScore,
    pub selected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEntry {
    pub name: String,
    /// beta_r, beta_a, beta_s_nonzero, beta_s_null, variance, tausq or random.
    pub category: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub replicate: usize,
    pub seed: u64,
    pub runs: Vec<PriorRun>,
    pub accuracy: Vec<AccuracyEntry>,
    pub gibbs_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSummary {
    pub prior: String,
    pub median_f1: f64,
    pub min_f1: f64,
    pub max_fp: usize,
    pub median_fp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub category: String,
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: String,
    pub config: EvalConfig,
    pub replicates: Vec<ReplicateReport>,
    pub selection: Vec<PriorSummary>,
    pub accuracy: Vec<AccuracySummary>,
    pub bench: Option<BenchRow>,
}

/// Closed-form variational marginals keyed by the names the Gibbs sampler
/// records. Off-diagonal covariance entries have no closed-form marginal and
/// are left out.
pub fn marginals(ds: &MultilevelDataset, state: &VariationalState) -> Vec<(String, Marginal)> {
    let mut out = Vec::new();
    for (k, name) in ds.names.iter().enumerate() {
        out.push((name.clone(), Marginal::Normal { mean: state.mu_beta[k], sd: state.sigma_beta[(k, k)].sqrt() }));
    }
    out.push(("sigsq".into(), Marginal::InvChiSq { xi: state.sigsq.xi, lambda: state.sigsq.lambda }));
    if ds.p_s > 0 && !state.zeta.mu.is_empty() && state.tausq.lambda > 0.0 {
        out.push(("tausq".into(), Marginal::InvChiSq { xi: state.tausq.xi, lambda: state.tausq.lambda }));
    }
    for (l, c) in state.cov.iter().enumerate() {
        let q = c.q();
        for k in 0..q {
            let xi = c.xi_sigma - 2.0 * q as f64 + 2.0;
            out.push((covariance_entry_name(l, k, k), Marginal::InvChiSq { xi, lambda: c.lambda_sigma[(k, k)] }));
        }
    }
    let normal = |mu: f64, var: f64| Marginal::Normal { mean: mu, sd: var.sqrt() };
    match (&ds.groups, &state.random) {
        (Groups::Two { groups, .. }, RandomQ::Two(qs)) => {
            for (g, q) in groups.iter().zip(qs) {
                for k in 0..q.mu.len() {
                    out.push((format!("u[{}][{k}]", g.id), normal(q.mu[k], q.sigma[(k, k)])));
                }
            }
        }
        (Groups::Three { groups, .. }, RandomQ::Three(qs)) => {
            for (g, q) in groups.iter().zip(qs) {
                for k in 0..q.mu.len() {
                    out.push((format!("uL1[{}][{k}]", g.id), normal(q.mu[k], q.sigma[(k, k)])));
                }
                for (s, sq) in g.subgroups.iter().zip(&q.subgroups) {
                    for k in 0..sq.mu.len() {
                        out.push((format!("uL2[{},{}][{k}]", g.id, s.id), normal(sq.mu[k], sq.sigma[(k, k)])));
                    }
                }
            }
        }
        _ => {}
    }
    out
}

fn category(ds: &MultilevelDataset, truth: &GroundTruth, name: &str) -> String {
    if let Some(k) = ds.names.iter().position(|n| n == name) {
        return if k < ds.p_r {
            "beta_r"
        } else if k < ds.p_r + ds.p_a {
            "beta_a"
        } else if truth.beta[k] != 0.0 {
            "beta_s_nonzero"
        } else {
            "beta_s_null"
        }
        .into();
    }
    match name {
        "tausq" => "tausq".into(),
        n if n == "sigsq" || n.starts_with("Sigma") => "variance".into(),
        _ => "random".into(),
    }
}

/// Fit, select and score one dataset under one prior family.
fn run_prior(
    cfg: &EvalConfig,
    family: &str,
    fit_ds: &MultilevelDataset,
    original: &MultilevelDataset,
    record: &StandardizationRecord,
    truth_nonzero: &[bool],
) -> Result<(PriorRun, VariationalState)> {
    let prior = PriorConfig { family: family.to_string(), ..cfg.prior.clone() }.build(fit_ds)?;
    let res = fit(fit_ds, &prior, &cfg.fit)?;
    let summaries = posterior_summaries(fit_ds, &res.state, 0.95);
    let s = destandardize_coefficients(&summaries.beta[original.selection_range()], record)?;
    let mu: Vec<f64> = s.iter().map(|c| c.mean).collect();
    let sel = savs(&mu, &original.selection_column_norms_sq())?;
    let selected =
        original.selection_names().iter().zip(&sel.gamma).filter(|(_, g)| **g).map(|(n, _)| n.clone()).collect();
    let run = PriorRun {
        prior: family.to_string(),
        iterations: res.iterations,
        converged: res.converged,
        wall_time_s: res.wall_time_s,
        selection: f1_score(&sel.gamma, truth_nonzero)?,
        selected,
    };
    Ok((run, res.state))
}

fn run_replicate(cfg: &EvalConfig, r: usize) -> Result<(ReplicateReport, Option<BenchRow>)> {
    let seed = cfg.sim.seed.wrapping_add(r as u64);
    let (original, truth) = simulate(&SimConfig { seed, ..cfg.sim.clone() })?;
    let (fit_ds, record) = if cfg.standardize {
        standardize_selection_columns(&original)?
    } else {
        (original.clone(), StandardizationRecord::identity(original.selection_names().to_vec()))
    };
    let truth_nonzero: Vec<bool> = original.selection_range().map(|k| truth.beta[k] != 0.0).collect();

    let mut runs = Vec::new();
    let mut acc_state = None;
    for family in &cfg.priors {
        let (run, state) = run_prior(cfg, family, &fit_ds, &original, &record, &truth_nonzero)?;
        if *family == cfg.accuracy_prior {
            acc_state = Some(state);
        }
        runs.push(run);
    }

    let mut accuracy = Vec::new();
    let mut gibbs_s = None;
    if r < cfg.accuracy_replicates {
        let state = match acc_state {
            Some(s) => s,
            None => run_prior(cfg, &cfg.accuracy_prior, &fit_ds, &original, &record, &truth_nonzero)?.1,
        };
        let prior = PriorConfig { family: cfg.accuracy_prior.clone(), ..cfg.prior.clone() }.build(&fit_ds)?;
        let start = Instant::now();
        let opts = GibbsOptions { seed: cfg.gibbs.seed.wrapping_add(seed), ..cfg.gibbs.clone() };
        let draws = gibbs_fit(&fit_ds, &prior, &opts)?;
        gibbs_s = Some(start.elapsed().as_secs_f64());
        for (name, q) in marginals(&fit_ds, &state) {
            if let Some(col) = draws.column(&name) {
                accuracy.push(AccuracyEntry {
                    category: category(&fit_ds, &truth, &name),
                    accuracy: accuracy_against_draws(&q, col)?,
                    name,
                });
            }
        }
    }

    let bench_row = match cfg.bench_sweeps {
        Some(sweeps) if r == 0 => {
            let prior = PriorConfig { family: cfg.accuracy_prior.clone(), ..cfg.prior.clone() }.build(&fit_ds)?;
            Some(bench(&fit_ds, &prior, sweeps, true)?)
        }
        _ => None,
    };
    Ok((ReplicateReport { replicate: r, seed, runs, accuracy, gibbs_s }, bench_row))
}

/// Simulate `replicates` datasets and fit, select and score each, running
/// replicates on parallel workers with independent seeds.
type ReplicateOutcome = Result<(ReplicateReport, Option<BenchRow>)>;

pub fn evaluate(cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let threads =
        if cfg.threads == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { cfg.threads };
    let mut results: Vec<Option<ReplicateOutcome>> = (0..cfg.replicates).map(|_| None).collect();
    for chunk in (0..cfg.replicates).collect::<Vec<_>>().chunks(threads) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|&r| (r, s.spawn(move || run_replicate(cfg, r)))).collect();
            for (r, h) in handles {
                results[r] = Some(
                    h.join()
                        .unwrap_or_else(|_| Err(Error::NumericalBreakdown(format!("replicate {r} worker panicked")))),
                );
            }
        });
    }
    let mut replicates = Vec::with_capacity(cfg.replicates);
    let mut bench_row = None;
    for res in results.into_iter().flatten() {
        let (rep, b) = res?;
        bench_row = bench_row.or(b);
        replicates.push(rep);
    }

    let selection = cfg
        .priors
        .iter()
        .map(|p| {
            let scores: Vec<SelectionScore> =
                replicates.iter().flat_map(|r| r.runs.iter().filter(|x| &x.prior == p).map(|x| x.selection)).collect();
            let f1: Vec<f64> = scores.iter().map(|s| s.f1).collect();
            let fp: Vec<f64> = scores.iter().map(|s| s.fp as f64).collect();
            PriorSummary {
                prior: p.clone(),
                median_f1: median(&f1),
                min_f1: f1.iter().copied().fold(f64::INFINITY, f64::min),
                max_fp: scores.iter().map(|s| s.fp).max().unwrap_or(0),
                median_fp: median(&fp),
            }
        })
        .collect();

    let mut categories: Vec<String> = Vec::new();
    for e in replicates.iter().flat_map(|r| &r.accuracy) {
        if !categories.contains(&e.category) {
            categories.push(e.category.clone());
        }
    }
    let accuracy = categories
        .into_iter()
        .map(|c| {
            let v: Vec<f64> =
                replicates.iter().flat_map(|r| &r.accuracy).filter(|e| e.category == c).map(|e| e.accuracy).collect();
            AccuracySummary {
                count: v.len(),
                min: v.iter().copied().fold(f64::INFINITY, f64::min),
                median: median(&v),
                max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                category: c,
            }
        })
        .collect();

    Ok(EvalReport {
        schema_version: SCHEMA_VERSION.into(),
        config: cfg.clone(),
        replicates,
        selection,
        accuracy,
        bench: bench_row,
    })
}
