//! Turns the `[model]` and `[data]` sections into a model and a train/test split.

use anyhow::{Context, Result};
use fwa_core::data::gen_synthetic_regression;
use fwa_core::{Dataset, LossModel, Sample};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone)]
pub struct Prepared {
    pub model: LossModel,
    pub train: Dataset,
    /// Equal to `train` when `test_fraction` is 0.
    pub test: Dataset,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let spec = &cfg.data;
    let mut data = match (&spec.path, &spec.synthetic) {
        (Some(path), _) => Dataset::load_csv(path, &spec.target, false)
            .with_context(|| format!("loading {}", path.display()))?,
        (None, Some(s)) => gen_synthetic_regression(s.dim, s.n, s.noise_std, s.seed)?.dataset,
        (None, None) => unreachable!("validated"),
    };
    if spec.l1_normalize {
        data = data.l1_normalized();
    }
    if spec.binarize {
        let samples = data
            .samples()
            .iter()
            .map(|z| Sample::new(z.features.clone(), if z.target > 0.0 { 1.0 } else { 0.0 }))
            .collect::<fwa_core::Result<Vec<_>>>()?;
        data = Dataset::new(samples)?
            .with_names(data.feature_names().to_vec(), data.target_name().to_string())?;
    }
    Ok(data)
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let data = load_dataset(cfg)?;
    let model = cfg.build_model(data.feature_dim())?;
    let (train, test) = if cfg.data.test_fraction == 0.0 {
        (data.clone(), data)
    } else {
        data.split(cfg.data.test_fraction, cfg.data.split_seed)?
    };
    Ok(Prepared { model, train, test })
}
