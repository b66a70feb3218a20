//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seeds = [0, 1, 2, 3, 4]
//! workers = 4
//!
//! [model]
//! kind = "linear"            # linear | logistic | mlp (with hidden = N)
//!
//! [data]
//! synthetic = { dim = 10, n = 2000, noise_std = 0.5, seed = 1 }
//! # path = "adult.csv"; target = "y"
//! l1_normalize = true
//! test_fraction = 0.2
//!
//! [[lr]]
//! kind = "constant"          # constant | inverse_t | inverse_sqrt_t | step_decay
//! alpha = 0.2
//!
//! [[avg]]
//! kind = "fwa"               # sgd | fwa | lawa | swa
//! k = 100
//!
//! [run]
//! epochs = 100
//! batch_size = 60
//!
//! [checks]
//! assert = true
//! distance = [["sgd", "fwa_k100", "swa"]]
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fwa_core::optimizer::{Init, RunConfig, Sampling};
use fwa_core::{AveragingScheme, LearningRateSchedule, LossModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub data: DataSpec,
    #[serde(default)]
    pub lr: Vec<LrSpec>,
    #[serde(default)]
    pub avg: Vec<AvgSpec>,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Worker threads for seed sweeps; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub checks: ChecksSpec,
    #[serde(default)]
    pub bounds: BoundsSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Linear,
    Logistic,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub n: usize,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "default_target")]
    pub target: String,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub l1_normalize: bool,
    /// Replace each target `y` by the label `y > 0`.
    #[serde(default)]
    pub binarize: bool,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
}

fn default_target() -> String {
    "y".into()
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSpec {
    Constant { alpha: f64 },
    InverseT { c: f64 },
    InverseSqrtT { c: f64 },
    /// `stages` equal slices of the run, from `start` down to `end`.
    StepDecay { start: f64, end: f64, stages: usize },
}

impl LrSpec {
    pub fn build(&self, horizon: usize) -> fwa_core::Result<LearningRateSchedule> {
        match *self {
            LrSpec::Constant { alpha } => LearningRateSchedule::constant(alpha),
            LrSpec::InverseT { c } => LearningRateSchedule::inverse_t(c),
            LrSpec::InverseSqrtT { c } => LearningRateSchedule::inverse_sqrt_t(c),
            LrSpec::StepDecay { start, end, stages } => {
                LearningRateSchedule::step_decay(start, end, stages, horizon)
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            LrSpec::Constant { alpha } => format!("constant_{alpha}"),
            LrSpec::InverseT { c } => format!("inverse_t_{c}"),
            LrSpec::InverseSqrtT { c } => format!("inverse_sqrt_t_{c}"),
            LrSpec::StepDecay { start, end, stages } => format!("step_decay_{start}_{end}_{stages}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AvgSpec {
    Sgd,
    Fwa { k: usize },
    Lawa { k: usize, d: usize },
    Swa,
}

impl AvgSpec {
    pub fn build(&self) -> fwa_core::Result<AveragingScheme> {
        match *self {
            AvgSpec::Sgd => Ok(AveragingScheme::sgd()),
            AvgSpec::Fwa { k } => AveragingScheme::fwa(k),
            AvgSpec::Lawa { k, d } => AveragingScheme::lawa(k, d),
            AvgSpec::Swa => Ok(AveragingScheme::swa()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingSpec {
    Permutation,
    WithReplacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub steps: Option<usize>,
    pub sampling: SamplingSpec,
    pub projection_radius: Option<f64>,
    /// Standard deviation of a normal initial point; zeros when absent.
    pub init_std: Option<f64>,
    pub history_cap: usize,
    /// Convergence logging interval in steps (the final step is always logged).
    pub log_every: usize,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 1,
            steps: None,
            sampling: SamplingSpec::Permutation,
            projection_radius: None,
            init_std: None,
            history_cap: 200_000,
            log_every: 1,
        }
    }
}

impl RunSpec {
    pub fn run_config(&self, seed: u64) -> RunConfig {
        let mut cfg = RunConfig::new(seed);
        cfg.epochs = self.epochs;
        cfg.batch_size = self.batch_size;
        cfg.steps = self.steps;
        cfg.sampling = match self.sampling {
            SamplingSpec::Permutation => Sampling::Permutation,
            SamplingSpec::WithReplacement => Sampling::WithReplacement,
        };
        cfg.projection_radius = self.projection_radius;
        cfg.init = match self.init_std {
            Some(std) => Init::Normal { std },
            None => Init::Zeros,
        };
        cfg.history_cap = self.history_cap;
        cfg
    }
}

/// Ordering assertions over seeds. Each chain lists scheme labels (or, for
/// `distance_by_lr`, learning-rate labels) from the largest expected value to the
/// smallest; a chain holds for a seed when the metric is non-increasing along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksSpec {
    pub assert: bool,
    /// Fraction of seeds on which every chain must hold.
    pub majority: f64,
    pub distance: Vec<Vec<String>>,
    pub gen_error: Vec<Vec<String>>,
    pub distance_by_lr: Vec<Vec<String>>,
    pub suboptimality: Vec<Vec<String>>,
}

impl Default for ChecksSpec {
    fn default() -> Self {
        Self {
            assert: false,
            majority: 0.8,
            distance: Vec::new(),
            gen_error: Vec::new(),
            distance_by_lr: Vec::new(),
            suboptimality: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    pub lipschitz: f64,
    pub beta: f64,
    pub g: f64,
    pub diameter: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSpec {
    pub t: usize,
    pub ks: Vec<usize>,
    pub ds: Vec<usize>,
    /// Real-valued windows for the decaying-rate non-convex bound.
    pub decay_ks: Vec<f64>,
    pub c: f64,
    pub alpha: f64,
    /// Fixed constants; estimated from the data when absent.
    pub constants: Option<ConstantsSpec>,
    pub probe_radius: f64,
    pub num_probes: usize,
}

impl Default for BoundsSpec {
    fn default() -> Self {
        Self {
            t: 10_000,
            ks: vec![1, 10, 100],
            ds: vec![1, 2, 5, 10],
            decay_ks: vec![1.2],
            c: 0.5,
            alpha: 0.01,
            constants: None,
            probe_radius: 1.0,
            num_probes: 200,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        match (&self.data.path, &self.data.synthetic) {
            (Some(_), Some(_)) => bail!("data: give either `path` or `synthetic`, not both"),
            (None, None) => bail!("data: one of `path` or `synthetic` is required"),
            _ => {}
        }
        if !(0.0..1.0).contains(&self.data.test_fraction) {
            bail!("data.test_fraction must lie in [0, 1)");
        }
        if !(self.checks.majority > 0.0 && self.checks.majority <= 1.0) {
            bail!("checks.majority must lie in (0, 1]");
        }
        if let ModelSpec::Mlp { hidden: 0 } = self.model {
            bail!("model.hidden must be positive");
        }
        Ok(())
    }

    pub fn build_model(&self, input_dim: usize) -> fwa_core::Result<LossModel> {
        match self.model {
            ModelSpec::Linear => LossModel::linear(input_dim),
            ModelSpec::Logistic => LossModel::logistic(input_dim),
            ModelSpec::Mlp { hidden } => LossModel::tiny_mlp(input_dim, hidden),
        }
    }

    pub fn schemes(&self) -> Result<Vec<AveragingScheme>> {
        if self.avg.is_empty() {
            bail!("at least one [[avg]] scheme is required");
        }
        Ok(self.avg.iter().map(AvgSpec::build).collect::<fwa_core::Result<_>>()?)
    }

    pub fn lrs(&self) -> Result<&[LrSpec]> {
        if self.lr.is_empty() {
            bail!("at least one [[lr]] schedule is required");
        }
        Ok(&self.lr)
    }
}
