use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use vograd::config::{BudgetMode, Experiment, ExperimentConfig};
use vograd::experiments::{self, moments::dump_estimates};
use vograd::output::write_jsonl;
use vograd::RayonExecutor;

/// Gradient estimator experiments: SVO trajectories, estimator sweeps,
/// network training and the seed-sharing cluster simulation.
#[derive(Parser, Debug)]
#[command(name = "vograd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// SVO trajectories on the quadratic, fixed and learned sigma (CSV)
    Fig2(Common),
    /// RMSE against sigma on the quartic (CSV)
    Fig3(Common),
    /// Small-network training curves per estimator (CSV)
    Fig4(Common),
    /// Seed-sharing protocol simulation (JSON report)
    Cluster(Common),
    /// Analytic against empirical moments (CSV)
    Moments {
        #[command(flatten)]
        common: Common,
        /// Also write the raw estimates as JSON lines
        #[arg(long, value_name = "PATH")]
        dump: Option<PathBuf>,
        /// Trials per estimator and sigma included in the dump
        #[arg(long, default_value_t = 100)]
        dump_trials: usize,
    },
    /// Print the full default config of an experiment as TOML
    PrintConfig {
        #[arg(value_enum)]
        experiment: Experiment,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config; defaults of the subcommand's experiment when omitted
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (overrides the config); stdout when neither is given
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Equal samples or equal evaluation cost across estimators
    #[arg(long, value_enum)]
    budget_mode: Option<BudgetMode>,
}

impl Common {
    fn resolve(&self, experiment: Experiment) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::defaults(experiment),
        };
        anyhow::ensure!(
            cfg.experiment == experiment,
            "config is for `{}` but the subcommand runs `{}`",
            cfg.experiment,
            experiment
        );
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(mode) = self.budget_mode {
            cfg.budget_mode = mode;
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (experiment, common) = match &cli.command {
        Command::PrintConfig { experiment } => {
            print!("{}", ExperimentConfig::defaults(*experiment).to_toml());
            return Ok(());
        }
        Command::Fig2(c) => (Experiment::Fig2Trajectory, c),
        Command::Fig3(c) => (Experiment::Fig3Sweep, c),
        Command::Fig4(c) => (Experiment::Fig4Nn, c),
        Command::Cluster(c) => (Experiment::ClusterSim, c),
        Command::Moments { common, .. } => (Experiment::MomentsTable, common),
    };
    let cfg = common.resolve(experiment)?;
    let exec = RayonExecutor::with_threads(common.threads)?;
    let out = sink(cfg.output.as_deref())?;
    match &cli.command {
        Command::Fig2(_) => experiments::run_fig2_trajectory(&cfg, &exec)?.write_csv(&cfg, out)?,
        Command::Fig3(_) => experiments::run_fig3_sweep(&cfg, &exec)?.write_csv(&cfg, out)?,
        Command::Fig4(_) => {
            let result = experiments::run_fig4_nn(&cfg, &exec)?;
            for r in result.runs.iter().filter(|r| r.flagged) {
                eprintln!(
                    "warning: {} ({}, sigma={}, seed {}) stopped on a non-finite loss",
                    r.label, r.estimator, r.sigma, r.seed_index
                );
            }
            result.write_csv(&cfg, out)?
        }
        Command::Cluster(_) => experiments::run_cluster(&cfg, &exec)?.write_json(&cfg, out)?,
        Command::Moments { dump, dump_trials, .. } => {
            experiments::run_moments_table(&cfg, &exec)?.write_csv(&cfg, out)?;
            if let Some(path) = dump {
                let mut w = sink(Some(path))?;
                for e in dump_estimates(&cfg, *dump_trials)? {
                    write_jsonl(&mut w, &e)?;
                }
                w.flush()?;
            }
        }
        Command::PrintConfig { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
