use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mlvb::cli::{
    cmd_bench, cmd_evaluate, cmd_fit, cmd_simulate, exit_code, write_bench, write_replicate_csv, RunConfig,
};
use mlvb::mfvb::FitMode;
use mlvb::{Error, Result};

#[derive(Parser)]
#[command(name = "mlvb", version, about = "Variational Bayes for multilevel linear mixed models with shrinkage priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to CSV data (or a simulated dataset) and select S effects
    Fit(Flags),
    /// Write a simulated dataset as CSV with schema and truth files
    Simulate(Flags),
    /// Run the simulation study and write an evaluation report
    Evaluate(Flags),
    /// Time streamlined against naive sweeps over a size grid
    Bench(Flags),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Streamlined,
    Naive,
}

#[derive(Clone, Copy, ValueEnum)]
enum Prior {
    Gaussian,
    Laplace,
    Horseshoe,
    Neg,
}

#[derive(Args)]
struct Flags {
    /// JSON run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV data file (overrides `data` in the config)
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum)]
    prior: Option<Prior>,
    #[arg(long)]
    neg_lambda: Option<f64>,
    /// Maximum number of sweeps
    #[arg(long)]
    iters: Option<usize>,
    /// Stop when the max relative parameter change drops below this
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow naive fits above the size guard
    #[arg(long)]
    force: bool,
}

impl Flags {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        if let Some(m) = self.mode {
            cfg.fit.mode = match m {
                Mode::Streamlined => FitMode::Streamlined,
                Mode::Naive => FitMode::Naive,
            };
        }
        if let Some(p) = self.prior {
            let name = match p {
                Prior::Gaussian => "gaussian",
                Prior::Laplace => "laplace",
                Prior::Horseshoe => "horseshoe",
                Prior::Neg => "neg",
            };
            cfg.prior.family = name.into();
            cfg.eval.accuracy_prior = name.into();
        }
        if let Some(l) = self.neg_lambda {
            cfg.prior.neg_lambda = l;
        }
        if let Some(i) = self.iters {
            cfg.fit.max_iters = i;
        }
        if let Some(t) = self.tol {
            cfg.fit.rel_change_tol = t;
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        cfg.apply_seed();
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if self.force {
            cfg.fit.force = true;
        }
        Ok(cfg)
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            // a closed pipe (e.g. `| head`) is not an error
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
            r => r?,
        },
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(f) => {
            let cfg = f.config()?;
            let out = cmd_fit(&cfg)?;
            log::info!("{} sweeps, converged = {}", out.iterations, out.converged);
            write_json(&out, cfg.out.as_deref())
        }
        Command::Simulate(f) => {
            let cfg = f.config()?;
            let out = cfg.out.clone().ok_or_else(|| Error::Config("simulate needs --out PATH.csv".into()))?;
            cmd_simulate(&cfg, &out)
        }
        Command::Evaluate(f) => {
            let cfg = f.config()?;
            let report = cmd_evaluate(&cfg)?;
            if let Some(p) = &cfg.out {
                write_replicate_csv(&report, &p.with_extension("replicates.csv"))?;
            }
            write_json(&report, cfg.out.as_deref())
        }
        Command::Bench(f) => {
            let cfg = f.config()?;
            let rows = cmd_bench(&cfg)?;
            match &cfg.out {
                Some(p) => write_bench(&rows, std::fs::File::create(p)?),
                None => write_bench(&rows, std::io::stdout().lock()),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
