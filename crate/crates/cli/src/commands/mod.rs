pub mod bounds;
pub mod convergence;
pub mod gen_data;
pub mod stability;
pub mod train;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::checks::ChainOutcome;
use crate::config::ExperimentConfig;

/// Files written and checks evaluated by one command.
#[derive(Debug, Clone, Default)]
pub struct CommandSummary {
    pub files: Vec<PathBuf>,
    pub checks: Vec<ChainOutcome>,
    /// Invariant or ordering failures that count against `checks.assert`.
    pub failures: Vec<String>,
}

impl CommandSummary {
    /// True when assertions are enabled and something failed.
    pub fn should_fail(&self, cfg: &ExperimentConfig) -> bool {
        cfg.checks.assert && !self.failures.is_empty()
    }

    pub(crate) fn absorb_checks(&mut self, outcomes: Vec<ChainOutcome>) {
        for o in &outcomes {
            if !o.passed {
                self.failures.push(o.describe());
            }
        }
        self.checks.extend(outcomes);
    }
}

/// Runs `f` for every seed on a pool of `workers` threads (0 = all cores) and returns the
/// results in seed order.
pub(crate) fn per_seed<T, F>(cfg: &ExperimentConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .context("building worker pool")?;
    pool.install(|| cfg.seeds.par_iter().map(|&s| f(s)).collect())
}

pub(crate) fn output_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

#[derive(Serialize)]
struct Manifest<'a, E: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a ExperimentConfig,
    details: E,
}

/// Writes `run.json` with the resolved config and command-specific details.
pub(crate) fn write_manifest<E: Serialize>(
    dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    details: E,
) -> Result<PathBuf> {
    let path = dir.join("run.json");
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        details,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

/// File-name-safe learning-rate label.
pub(crate) fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' })
        .collect()
}
