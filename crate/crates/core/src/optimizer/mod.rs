//! The SGD loop: sampling, optional projection onto an l2 ball, trajectory logging and
//! per-scheme checkpoint averages.

mod averager;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use averager::{direct_average, AveragerState};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{LossModel, ParameterVector, Sample};
use crate::rng::{stream, Stream};
use crate::schedule::{AveragingScheme, LearningRateSchedule, SchemeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// `batch_size` indices drawn uniformly with replacement at every step.
    WithReplacement,
    /// A fresh shuffle each epoch, consumed in consecutive chunks.
    Permutation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Zeros,
    Normal { std: f64 },
    Given(ParameterVector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Explicit step count; overrides `epochs` when set.
    pub steps: Option<usize>,
    pub sampling: Sampling,
    pub projection_radius: Option<f64>,
    pub init: Init,
    /// Full iterate history is kept only if `(T + 1) * dim` stays below this many scalars.
    pub history_cap: usize,
    /// Keep the sampled indices of every step.
    pub record_indices: bool,
}

impl RunConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            epochs: 1,
            batch_size: 1,
            steps: None,
            sampling: Sampling::Permutation,
            projection_radius: None,
            init: Init::Zeros,
            history_cap: 200_000,
            record_indices: false,
        }
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size.max(1))
    }

    pub fn total_steps(&self, n: usize) -> usize {
        self.steps.unwrap_or(self.epochs * self.steps_per_epoch(n))
    }

    fn validate(&self, n: usize) -> Result<usize> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if let Some(r) = self.projection_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config("projection_radius must be positive".into()));
            }
        }
        let t = self.total_steps(n);
        if t == 0 {
            return Err(Error::Config("run must take at least one step".into()));
        }
        Ok(t)
    }
}

/// Iterates and per-step logs of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `w_{first_step} .. w_T`; the whole run unless windowed.
    pub iterates: Vec<ParameterVector>,
    pub first_step: usize,
    pub losses: Vec<f64>,
    pub lrs: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub step_count: usize,
    /// Maximum number of iterates kept (`step_count + 1` for a full history).
    pub retained_window: usize,
    pub indices: Option<Vec<Vec<usize>>>,
}

impl Trajectory {
    pub fn is_full(&self) -> bool {
        self.first_step == 0
    }

    pub fn iterate_at(&self, step: usize) -> Option<&ParameterVector> {
        step.checked_sub(self.first_step)
            .and_then(|i| self.iterates.get(i))
    }

    pub fn last(&self) -> &ParameterVector {
        self.iterates.last().expect("trajectory holds w_0")
    }

    /// Writes `step,train_loss,lr,grad_norm`, one row per step.
    pub fn write_log_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "train_loss", "lr", "grad_norm"])?;
        for i in 0..self.step_count {
            w.write_record([
                (i + 1).to_string(),
                self.losses[i].to_string(),
                self.lrs[i].to_string(),
                self.grad_norms[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `step,w0,w1,...` for every `every`-th retained iterate (and the last).
    pub fn write_snapshots_csv(&self, path: impl AsRef<Path>, every: usize) -> Result<()> {
        let every = every.max(1);
        let mut w = csv::Writer::from_path(path)?;
        let dim = self.last().dim();
        let mut header = vec!["step".to_string()];
        header.extend((0..dim).map(|j| format!("w{j}")));
        w.write_record(&header)?;
        let last = self.first_step + self.iterates.len() - 1;
        for (i, it) in self.iterates.iter().enumerate() {
            let step = self.first_step + i;
            if !step.is_multiple_of(every) && step != last {
                continue;
            }
            let mut row = vec![step.to_string()];
            row.extend(it.as_slice().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// What the observer sees after each step.
#[derive(Debug)]
pub struct StepEvent<'a> {
    pub step: usize,
    pub epoch: usize,
    pub epoch_end: bool,
    pub iterate: &'a ParameterVector,
    /// Current average per scheme, in the order the schemes were given.
    pub averages: &'a [ParameterVector],
    pub batch_indices: &'a [usize],
    pub batch_loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    /// Final checkpoint average per scheme.
    pub final_averages: Vec<ParameterVector>,
}

/// One step `w - α ∇F_batch(w)`, projected onto the ball when a radius is given.
pub fn sgd_step(
    model: &LossModel,
    w: &ParameterVector,
    batch: &[Sample],
    alpha: f64,
    projection_radius: Option<f64>,
) -> Result<ParameterVector> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::contract(format!("step size must be positive, got {alpha}")));
    }
    let g = model.grad_batch(w, batch)?;
    if !g.is_finite() {
        return Err(Error::numeric(None, "non-finite gradient"));
    }
    let mut next = w.clone();
    next.add_scaled(-alpha, &g);
    if let Some(r) = projection_radius {
        next.project_to_ball(r);
    }
    if !next.is_finite() {
        return Err(Error::numeric(None, "iterate overflowed"));
    }
    Ok(next)
}

struct Sampler {
    rng: ChaCha8Rng,
    mode: Sampling,
    n: usize,
    batch: usize,
    perm: Vec<usize>,
    pos: usize,
}

impl Sampler {
    fn new(seed: u64, mode: Sampling, n: usize, batch: usize) -> Self {
        Self {
            rng: stream(seed, Stream::Sampling),
            mode,
            n,
            batch: batch.min(n),
            perm: (0..n).collect(),
            pos: 0,
        }
    }

    fn next_batch(&mut self, out: &mut Vec<usize>) {
        out.clear();
        match self.mode {
            Sampling::WithReplacement => {
                out.extend((0..self.batch).map(|_| self.rng.random_range(0..self.n)));
            }
            Sampling::Permutation => {
                if self.pos == 0 {
                    self.perm.iter_mut().enumerate().for_each(|(i, p)| *p = i);
                    self.perm.shuffle(&mut self.rng);
                }
                let end = (self.pos + self.batch).min(self.n);
                out.extend_from_slice(&self.perm[self.pos..end]);
                self.pos = if end == self.n { 0 } else { end };
            }
        }
    }
}

enum Running {
    Last,
    Window(AveragerState),
    Cumulative(ParameterVector),
}

/// SGD over a fixed dataset with any number of averaging schemes observed on the same
/// trajectory.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    pub model: &'a LossModel,
    pub dataset: &'a Dataset,
    pub lr: &'a LearningRateSchedule,
    pub cfg: &'a RunConfig,
}

impl<'a> Trainer<'a> {
    pub fn new(
        model: &'a LossModel,
        dataset: &'a Dataset,
        lr: &'a LearningRateSchedule,
        cfg: &'a RunConfig,
    ) -> Self {
        Self {
            model,
            dataset,
            lr,
            cfg,
        }
    }

    pub fn initial_point(&self) -> Result<ParameterVector> {
        let p = self.model.param_dim();
        let mut w0 = match &self.cfg.init {
            Init::Zeros => ParameterVector::zeros(p),
            Init::Normal { std } => {
                let normal = Normal::new(0.0, *std)
                    .map_err(|e| Error::Config(format!("init std: {e}")))?;
                let mut rng = stream(self.cfg.seed, Stream::Init);
                ParameterVector::new((0..p).map(|_| normal.sample(&mut rng)).collect())?
            }
            Init::Given(w) => {
                if w.dim() != p {
                    return Err(Error::contract(format!(
                        "initial point has dimension {}, model needs {p}",
                        w.dim()
                    )));
                }
                w.clone()
            }
        };
        if let Some(r) = self.cfg.projection_radius {
            w0.project_to_ball(r);
        }
        Ok(w0)
    }

    pub fn run(&self, schemes: &[AveragingScheme]) -> Result<RunOutput> {
        self.run_observed(schemes, |_| {})
    }

    pub fn run_observed(
        &self,
        schemes: &[AveragingScheme],
        mut observer: impl FnMut(&StepEvent<'_>),
    ) -> Result<RunOutput> {
        let samples = self.dataset.samples();
        let n = samples.len();
        let t_total = self.cfg.validate(n)?;
        for z in samples {
            if z.features.len() != self.model.input_dim() {
                return Err(Error::contract(format!(
                    "dataset feature dimension {} does not match model input {}",
                    z.features.len(),
                    self.model.input_dim()
                )));
            }
        }
        for s in schemes {
            s.checkpoint_mask(t_total)?;
        }

        let p = self.model.param_dim();
        let full = (t_total + 1).saturating_mul(p) <= self.cfg.history_cap;
        let window = if full {
            t_total + 1
        } else {
            schemes.iter().filter_map(|s| s.span()).max().unwrap_or(1).max(1)
        };

        let mut w = self.initial_point()?;
        let mut iterates = std::collections::VecDeque::with_capacity(window.min(1 << 16));
        iterates.push_back(w.clone());
        let mut first_step = 0usize;

        let mut running: Vec<Running> = schemes
            .iter()
            .map(|s| match s.kind() {
                SchemeKind::Swa => Running::Cumulative(ParameterVector::zeros(p)),
                _ if s.span() == Some(1) && s.rho()[0] == 1.0 => Running::Last,
                _ => Running::Window(AveragerState::for_scheme(s).expect("windowed scheme")),
            })
            .collect();
        let mut averages: Vec<ParameterVector> = vec![w.clone(); schemes.len()];

        let mut losses = Vec::with_capacity(t_total);
        let mut lrs = Vec::with_capacity(t_total);
        let mut grad_norms = Vec::with_capacity(t_total);
        let mut indices_log = self.cfg.record_indices.then(Vec::new);

        let spe = self.cfg.steps_per_epoch(n);
        let mut sampler = Sampler::new(self.cfg.seed, self.cfg.sampling, n, self.cfg.batch_size);
        let mut batch = Vec::with_capacity(self.cfg.batch_size);
        let mut grad = vec![0.0; p];

        for t in 1..=t_total {
            sampler.next_batch(&mut batch);
            let alpha = self.lr.rate_at(t)?;
            let loss = self.model.grad_indexed(w.as_slice(), samples, &batch, &mut grad);
            if !grad.iter().all(|g| g.is_finite()) || !loss.is_finite() {
                return Err(Error::numeric(Some(t), "non-finite gradient or loss"));
            }
            let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            let mut next = w.clone();
            for (x, g) in next.as_mut_slice().iter_mut().zip(&grad) {
                *x -= alpha * g;
            }
            if let Some(r) = self.cfg.projection_radius {
                next.project_to_ball(r);
            }
            if !next.is_finite() {
                return Err(Error::numeric(Some(t), "iterate overflowed"));
            }
            let update = w.sub(&next);
            w = next;

            iterates.push_back(w.clone());
            if iterates.len() > window {
                iterates.pop_front();
                first_step += 1;
            }

            for (i, (r, scheme)) in running.iter_mut().zip(schemes).enumerate() {
                match r {
                    Running::Last => averages[i] = w.clone(),
                    Running::Cumulative(sum) => {
                        sum.add_scaled(1.0, &w);
                        averages[i] = sum.scaled(1.0 / t as f64);
                    }
                    Running::Window(state) => {
                        state.observe(&update, &w)?;
                        averages[i] = match state.current_average() {
                            Some(a) => a.clone(),
                            None => direct_average(&scheme.available_mask(t), |s| {
                                &iterates[s - first_step]
                            }),
                        };
                    }
                }
            }

            losses.push(loss);
            lrs.push(alpha);
            grad_norms.push(grad_norm);
            if let Some(log) = indices_log.as_mut() {
                log.push(batch.clone());
            }
            observer(&StepEvent {
                step: t,
                epoch: (t - 1) / spe + 1,
                epoch_end: t % spe == 0 || t == t_total,
                iterate: &w,
                averages: &averages,
                batch_indices: &batch,
                batch_loss: loss,
                lr: alpha,
                grad_norm,
            });
        }

        let iterates: Vec<ParameterVector> = iterates.into();
        let final_averages = schemes
            .iter()
            .zip(&running)
            .map(|(s, r)| match (s.kind(), r) {
                (SchemeKind::Swa, Running::Cumulative(sum)) if !full => {
                    sum.scaled(1.0 / t_total as f64)
                }
                _ => direct_average(&s.checkpoint_mask(t_total).expect("checked"), |step| {
                    &iterates[step - first_step]
                }),
            })
            .collect();

        Ok(RunOutput {
            trajectory: Trajectory {
                iterates,
                first_step,
                losses,
                lrs,
                grad_norms,
                step_count: t_total,
                retained_window: window,
                indices: indices_log,
            },
            final_averages,
        })
    }
}

/// Single-scheme run returning the trajectory and the final checkpoint average.
pub fn train(
    model: &LossModel,
    dataset: &Dataset,
    lr: &LearningRateSchedule,
    cfg: &RunConfig,
    scheme: &AveragingScheme,
) -> Result<(Trajectory, ParameterVector)> {
    let mut out = Trainer::new(model, dataset, lr, cfg).run(std::slice::from_ref(scheme))?;
    let avg = out.final_averages.pop().expect("one scheme");
    Ok((out.trajectory, avg))
}
