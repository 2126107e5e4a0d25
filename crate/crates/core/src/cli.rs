//! Batch commands behind the `mlvb` binary: configuration, the four
//! subcommands and their JSON/CSV outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    destandardize_coefficients, intercept_shift, load_csv, standardize_selection_columns, write_csv, CsvSchema, Depth,
    MultilevelDataset, StandardizationRecord,
};
use crate::error::{Error, Result};
use crate::eval::{
    bench, evaluate, simulate, BenchRow, EvalConfig, EvalReport, SimConfig, SizeRule, BENCH_HEADER, SCHEMA_VERSION,
};
use crate::mfvb::{fit, posterior_summaries, FitMode, FitOptions, PriorConfig, VariationalState};
use crate::savs::{savs, SelectionResult};
use crate::summary::CoefficientSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SavsScale {
    /// Destandardized means against the original columns.
    #[default]
    Original,
    Standardized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchPoint {
    pub m: usize,
    pub p_s: usize,
}

impl Default for BenchPoint {
    fn default() -> Self {
        BenchPoint { m: 10, p_s: 25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub grid: Vec<BenchPoint>,
    pub depth: Depth,
    pub n: SizeRule,
    pub o: SizeRule,
    pub sweeps: usize,
    /// Run the naive mode where the size guard allows it.
    pub naive: bool,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            grid: vec![BenchPoint { m: 10, p_s: 25 }, BenchPoint { m: 20, p_s: 25 }, BenchPoint { m: 50, p_s: 25 }],
            depth: Depth::Three,
            n: SizeRule::Fixed(5),
            o: SizeRule::Fixed(10),
            sweeps: 20,
            naive: true,
            seed: 1,
        }
    }
}

/// Everything a run needs, read from one JSON file and then overridden by
/// command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// CSV input for `fit`.
    pub data: Option<PathBuf>,
    pub schema: Option<CsvSchema>,
    /// Simulation design for `simulate`, or as the data source of `fit`.
    pub sim: Option<SimConfig>,
    pub prior: PriorConfig,
    pub fit: FitOptions,
    pub standardize: bool,
    pub savs_scale: SavsScale,
    /// Credible level of reported intervals.
    pub level: f64,
    pub eval: EvalConfig,
    pub bench: BenchConfig,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            schema: None,
            sim: None,
            prior: PriorConfig::default(),
            fit: FitOptions::default(),
            standardize: true,
            savs_scale: SavsScale::Original,
            level: 0.95,
            eval: EvalConfig::default(),
            bench: BenchConfig::default(),
            seed: None,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // relative data paths are taken from the config's directory
        if let (Some(d), Some(dir)) = (&cfg.data, path.parent()) {
            if d.is_relative() {
                cfg.data = Some(dir.join(d));
            }
        }
        Ok(cfg)
    }

    /// Push `seed` into every seeded section.
    pub fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            if let Some(sim) = &mut self.sim {
                sim.seed = s;
            }
            self.eval.sim.seed = s;
            self.eval.gibbs.seed = s;
            self.bench.seed = s;
        }
    }

    fn load_dataset(&self) -> Result<MultilevelDataset> {
        match (&self.data, &self.sim) {
            (Some(_), Some(_)) => Err(Error::Config("give either `data` or `sim`, not both".into())),
            (None, None) => Err(Error::Config("no data source: set `data` (with `schema`) or `sim`".into())),
            (Some(path), None) => {
                let schema = self.schema.as_ref().ok_or_else(|| Error::Config("`data` requires a `schema`".into()))?;
                if !path.exists() {
                    return Err(Error::Config(format!("data file {} does not exist", path.display())));
                }
                load_csv(path, schema)
            }
            (None, Some(sim)) => Ok(simulate(sim)?.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSummary {
    pub xi: f64,
    pub lambda: f64,
    /// E_q(1/x)
    pub mean_reciprocal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSummary {
    pub xi: f64,
    pub lambda: Vec<Vec<f64>>,
    /// E_q(Σ⁻¹)
    pub mean_inverse: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutput {
    pub scale: SavsScale,
    pub names: Vec<String>,
    #[serde(flatten)]
    pub result: SelectionResult,
}

/// JSON document written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub schema_version: String,
    pub prior: String,
    pub mode: FitMode,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    pub wall_time_s: f64,
    pub storage_bytes: usize,
    pub level: f64,
    /// β summaries; S entries on the original covariate scale.
    pub beta: Vec<CoefficientSummary>,
    /// Add to the intercept when S coefficients are read on the original
    /// scale (zero without standardization).
    pub intercept_shift: f64,
    pub random: Vec<CoefficientSummary>,
    pub sigsq: ScalarSummary,
    pub tausq: Option<ScalarSummary>,
    pub covariance: Vec<CovarianceSummary>,
    pub selection: SelectionOutput,
    pub standardization: StandardizationRecord,
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn scalar(q: &crate::mfvb::ScalarQ) -> ScalarSummary {
    ScalarSummary { xi: q.xi, lambda: q.lambda, mean_reciprocal: q.mu_recip }
}

/// Fit, select and summarize. Returns the output document.
pub fn cmd_fit(cfg: &RunConfig) -> Result<FitOutput> {
    let original = cfg.load_dataset()?;
    original.validate()?;
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::Config("level must lie in (0, 1)".into()));
    }
    let (ds, record) = if cfg.standardize && original.p_s > 0 {
        standardize_selection_columns(&original)?
    } else {
        (original.clone(), StandardizationRecord::identity(original.selection_names().to_vec()))
    };
    let prior = cfg.prior.build(&ds)?;
    let res = fit(&ds, &prior, &cfg.fit)?;
    let state: &VariationalState = &res.state;
    let sums = posterior_summaries(&ds, state, cfg.level);
    let range = ds.selection_range();
    let s_orig = destandardize_coefficients(&sums.beta[range.clone()], &record)?;
    let mut beta = sums.beta.clone();
    beta.splice(range.clone(), s_orig.iter().cloned());
    let s_std: Vec<f64> = sums.beta[range].iter().map(|c| c.mean).collect();

    let result = match cfg.savs_scale {
        SavsScale::Original => {
            let mu: Vec<f64> = s_orig.iter().map(|c| c.mean).collect();
            savs(&mu, &original.selection_column_norms_sq())?
        }
        SavsScale::Standardized => savs(&s_std, &ds.selection_column_norms_sq())?,
    };
    let gl = prior.family.is_global_local();
    Ok(FitOutput {
        schema_version: SCHEMA_VERSION.into(),
        prior: prior.family.name().into(),
        mode: cfg.fit.mode,
        iterations: res.iterations,
        converged: res.converged,
        trace: res.trace.clone(),
        wall_time_s: res.wall_time_s,
        storage_bytes: res.storage_bytes,
        level: cfg.level,
        beta,
        intercept_shift: intercept_shift(&s_std, &record),
        random: sums.random,
        sigsq: scalar(&state.sigsq),
        tausq: gl.then(|| scalar(&state.tausq)),
        covariance: state
            .cov
            .iter()
            .map(|c| CovarianceSummary {
                xi: c.xi_sigma,
                lambda: rows(&c.lambda_sigma),
                mean_inverse: rows(&c.m_sigma_inv),
            })
            .collect(),
        selection: SelectionOutput { scale: cfg.savs_scale, names: original.selection_names().to_vec(), result },
        standardization: record,
    })
}

/// Paths written by `simulate` next to the CSV: schema and true values.
pub fn sidecar_paths(csv: &Path) -> (PathBuf, PathBuf) {
    let stem = csv.with_extension("");
    let s = stem.display().to_string();
    (PathBuf::from(format!("{s}.schema.json")), PathBuf::from(format!("{s}.truth.json")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthOutput {
    pub schema_version: String,
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub sigsq: f64,
    pub sigma: Vec<Vec<Vec<f64>>>,
    pub config: SimConfig,
}

/// Simulate a dataset and write it as CSV with schema and truth sidecars.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sim = cfg.sim.clone().unwrap_or_default();
    let (ds, truth) = simulate(&sim)?;
    let schema = write_csv(&ds, out)?;
    let (schema_path, truth_path) = sidecar_paths(out);
    std::fs::write(&schema_path, serde_json::to_string_pretty(&schema)?)?;
    let doc = TruthOutput {
        schema_version: SCHEMA_VERSION.into(),
        names: ds.names.clone(),
        beta: truth.beta.iter().copied().collect(),
        sigsq: truth.sigsq,
        sigma: truth.sigma.iter().map(rows).collect(),
        config: sim,
    };
    std::fs::write(&truth_path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvalReport> {
    let mut ecfg = cfg.eval.clone();
    if let Some(sim) = &cfg.sim {
        ecfg.sim = sim.clone();
    }
    ecfg.fit = cfg.fit.clone();
    ecfg.prior = PriorConfig { family: ecfg.prior.family.clone(), ..cfg.prior.clone() };
    evaluate(&ecfg)
}

/// Per-replicate, per-prior selection metrics as CSV.
pub fn write_replicate_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "replicate",
        "seed",
        "prior",
        "iterations",
        "converged",
        "tp",
        "fp",
        "tn",
        "fn",
        "precision",
        "recall",
        "f1",
    ])?;
    for r in &report.replicates {
        for run in &r.runs {
            let s = run.selection;
            w.write_record([
                r.replicate.to_string(),
                r.seed.to_string(),
                run.prior.clone(),
                run.iterations.to_string(),
                run.converged.to_string(),
                s.tp.to_string(),
                s.fp.to_string(),
                s.tn.to_string(),
                s.fn_.to_string(),
                s.precision.to_string(),
                s.recall.to_string(),
                s.f1.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<Vec<BenchRow>> {
    let b = &cfg.bench;
    if b.grid.is_empty() || b.sweeps == 0 {
        return Err(Error::Config("bench needs a non-empty grid and sweeps >= 1".into()));
    }
    let mut out = Vec::with_capacity(b.grid.len());
    for pt in &b.grid {
        let sim = SimConfig { depth: b.depth, seed: b.seed, ..SimConfig::study(pt.m, b.n, b.o, pt.p_s) };
        let (ds, _) = simulate(&sim)?;
        let prior = cfg.prior.build(&ds)?;
        out.push(bench(&ds, &prior, b.sweeps, b.naive)?);
    }
    Ok(out)
}

/// Write bench rows as CSV under [`BENCH_HEADER`].
pub fn write_bench<W: std::io::Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_HEADER)?;
    for r in rows {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

/// Process exit code for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}
