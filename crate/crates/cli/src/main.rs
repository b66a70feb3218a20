use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fwa_cli::commands::{self, CommandSummary};
use fwa_cli::ExperimentConfig;

#[derive(Parser)]
#[command(name = "fwa", version, about = "SGD with finite weight averaging: experiments and bound audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured dataset to data.csv.
    GenData(Common),
    /// Train every scheme and write per-step logs and final averages.
    Train(Common),
    /// Twin-dataset stability sweep.
    Stability(Common),
    /// Suboptimality of every scheme over training.
    Convergence(Common),
    /// Evaluate all bounds over a grid and check their invariants.
    Bounds(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds (overrides `seeds`).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads (overrides `workers`).
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn report(summary: &CommandSummary) {
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    for c in &summary.checks {
        println!("[{}] {}", if c.passed { "pass" } else { "FAIL" }, c.describe());
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let (cfg, summary) = match &cli.command {
        Command::GenData(c) => {
            let cfg = c.load()?;
            let s = commands::gen_data::run(&cfg)?;
            (cfg, s)
        }
        Command::Train(c) => {
            let cfg = c.load()?;
            let s = commands::train::run(&cfg)?;
            (cfg, s)
        }
        Command::Stability(c) => {
            let cfg = c.load()?;
            let s = commands::stability::run(&cfg)?.summary;
            (cfg, s)
        }
        Command::Convergence(c) => {
            let cfg = c.load()?;
            let s = commands::convergence::run(&cfg)?.summary;
            (cfg, s)
        }
        Command::Bounds(c) => {
            let cfg = c.load()?;
            let out = commands::bounds::run(&cfg).context("bound audit")?;
            for inv in &out.invariants {
                println!("[{}] {} ({})", if inv.passed { "pass" } else { "FAIL" }, inv.name, inv.detail);
            }
            (cfg, out.summary)
        }
    };
    report(&summary);
    if summary.should_fail(&cfg) {
        for f in &summary.failures {
            eprintln!("assertion failed: {f}");
        }
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}
