//! Writes the configured dataset to `data.csv`.

use anyhow::Result;
use fwa_core::data::gen_synthetic_regression;
use serde::Serialize;

use super::{output_dir, write_manifest, CommandSummary};
use crate::config::ExperimentConfig;
use crate::prepare::load_dataset;

pub fn run(cfg: &ExperimentConfig) -> Result<CommandSummary> {
    let dir = output_dir(cfg)?;
    let data = load_dataset(cfg)?;
    let path = dir.join("data.csv");
    data.write_csv(&path)?;

    #[derive(Serialize)]
    struct Details {
        n: usize,
        feature_dim: usize,
        true_weights: Option<Vec<f64>>,
        true_bias: Option<f64>,
    }
    let truth = match &cfg.data.synthetic {
        Some(s) => Some(gen_synthetic_regression(s.dim, s.n, s.noise_std, s.seed)?),
        None => None,
    };
    let manifest = write_manifest(
        &dir,
        "gen-data",
        cfg,
        Details {
            n: data.n(),
            feature_dim: data.feature_dim(),
            true_weights: truth.as_ref().map(|t| t.weights.clone()),
            true_bias: truth.map(|t| t.bias),
        },
    )?;
    Ok(CommandSummary {
        files: vec![path, manifest],
        ..Default::default()
    })
}
