//! Twin-dataset stability measurements and expansivity probes of the gradient update.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{make_twin, Dataset, TwinPair};
use crate::error::{Error, Result};
use crate::model::{LossModel, ParameterVector};
use crate::optimizer::{RunConfig, Trainer, Trajectory};
use crate::rng::{stream, Stream};
use crate::schedule::{AveragingScheme, LearningRateSchedule};

/// `√(‖w − w′‖² / (‖w‖² + ‖w′‖²))`, defined as 0 when both vectors are zero.
pub fn parameter_distance(w: &ParameterVector, w_prime: &ParameterVector) -> Result<f64> {
    if w.dim() != w_prime.dim() {
        return Err(Error::contract(format!(
            "distance between vectors of dimension {} and {}",
            w.dim(),
            w_prime.dim()
        )));
    }
    let denom = w.norm_sq() + w_prime.norm_sq();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((w.sub(w_prime).norm_sq() / denom).sqrt())
}

/// Training and test error of `w`: mean loss for regression, 0-1 error for classifiers.
pub fn train_test_errors(
    model: &LossModel,
    w: &ParameterVector,
    train: &Dataset,
    test: &Dataset,
) -> Result<(f64, f64)> {
    let err = |d: &Dataset| {
        if model.is_classifier() {
            model.error_rate(w, d.samples())
        } else {
            model.empirical_risk(w, d.samples())
        }
    };
    Ok((err(train)?, err(test)?))
}

/// `|train error − test error|`.
pub fn generalization_error(
    model: &LossModel,
    w: &ParameterVector,
    train: &Dataset,
    test: &Dataset,
) -> Result<f64> {
    let (tr, te) = train_test_errors(model, w, train, test)?;
    Ok((tr - te).abs())
}

/// Per-epoch measurements of one scheme on a twin pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub scheme: AveragingScheme,
    pub seed: u64,
    /// Distance between the averaged models trained on `S` and `S′`.
    pub parameter_distance: Vec<f64>,
    /// Distance between the raw last iterates, for reference.
    pub iterate_distance: Vec<f64>,
    pub generalization_error: Vec<f64>,
    pub train_error: Vec<f64>,
    pub test_error: Vec<f64>,
}

impl StabilityReport {
    pub fn final_distance(&self) -> f64 {
        *self.parameter_distance.last().expect("at least one epoch")
    }

    pub fn final_gen_error(&self) -> f64 {
        *self.generalization_error.last().expect("at least one epoch")
    }
}

/// Everything produced by a coupled run on one twin pair.
#[derive(Debug, Clone)]
pub struct TwinRun {
    pub pair: TwinPair,
    pub reports: Vec<StabilityReport>,
    /// First step whose batch contains `pair.differing_index`.
    pub first_touch: Option<usize>,
    pub trajectory: Trajectory,
    pub trajectory_prime: Trajectory,
}

/// Builds a twin pair from `base` (seeded by `cfg.seed`) and runs the coupled experiment.
pub fn run_stability_experiment(
    model: &LossModel,
    base: &Dataset,
    test: &Dataset,
    lr: &LearningRateSchedule,
    cfg: &RunConfig,
    schemes: &[AveragingScheme],
) -> Result<TwinRun> {
    let pair = make_twin(base, cfg.seed)?;
    run_on_pair(model, pair, test, lr, cfg, schemes)
}

/// Trains on `pair.s` and `pair.s_prime` with the same seed, initial point and index
/// stream, and records per-epoch distances and generalization errors for every scheme.
pub fn run_on_pair(
    model: &LossModel,
    pair: TwinPair,
    test: &Dataset,
    lr: &LearningRateSchedule,
    cfg: &RunConfig,
    schemes: &[AveragingScheme],
) -> Result<TwinRun> {
    if schemes.is_empty() {
        return Err(Error::contract("stability experiment needs at least one scheme"));
    }
    let mut cfg = cfg.clone();
    cfg.record_indices = true;

    type Snap = (Vec<ParameterVector>, ParameterVector);
    let run = |data: &Dataset| -> Result<(Trajectory, Vec<Snap>)> {
        let mut snaps = Vec::new();
        let out = Trainer::new(model, data, lr, &cfg).run_observed(schemes, |ev| {
            if ev.epoch_end {
                snaps.push((ev.averages.to_vec(), ev.iterate.clone()));
            }
        })?;
        Ok((out.trajectory, snaps))
    };
    let (a, b) = std::thread::scope(|scope| {
        let h = scope.spawn(|| run(&pair.s_prime));
        let a = run(&pair.s);
        (a, h.join().expect("twin run panicked"))
    });
    let (trajectory, snaps) = a?;
    let (trajectory_prime, snaps_prime) = b?;

    let mut reports: Vec<StabilityReport> = schemes
        .iter()
        .map(|s| StabilityReport {
            scheme: s.clone(),
            seed: cfg.seed,
            parameter_distance: Vec::new(),
            iterate_distance: Vec::new(),
            generalization_error: Vec::new(),
            train_error: Vec::new(),
            test_error: Vec::new(),
        })
        .collect();
    for ((avgs, it), (avgs_p, it_p)) in snaps.iter().zip(&snaps_prime) {
        let it_dist = parameter_distance(it, it_p)?;
        for (r, (w, w_p)) in reports.iter_mut().zip(avgs.iter().zip(avgs_p)) {
            let (tr, te) = train_test_errors(model, w, &pair.s, test)?;
            r.parameter_distance.push(parameter_distance(w, w_p)?);
            r.iterate_distance.push(it_dist);
            r.generalization_error.push((tr - te).abs());
            r.train_error.push(tr);
            r.test_error.push(te);
        }
    }

    let first_touch = trajectory
        .indices
        .as_ref()
        .and_then(|idx| idx.iter().position(|b| b.contains(&pair.differing_index)))
        .map(|i| i + 1);
    Ok(TwinRun {
        pair,
        reports,
        first_touch,
        trajectory,
        trajectory_prime,
    })
}

/// Largest observed `‖G(u) − G(v)‖ / ‖u − v‖` for an update map `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansivityProbe {
    pub alpha: f64,
    pub num_pairs: usize,
    pub max_ratio: f64,
}

impl ExpansivityProbe {
    /// `max_ratio ≤ 1 + tol`.
    pub fn is_non_expansive(&self, tol: f64) -> bool {
        self.max_ratio <= 1.0 + tol
    }

    /// `max_ratio ≤ 1 + α β + tol`.
    pub fn within_smooth_bound(&self, beta: f64, tol: f64) -> bool {
        self.max_ratio <= 1.0 + self.alpha * beta + tol
    }
}

/// Draws a standard normal direction scaled to a uniform radius in `[0, radius]`.
fn random_point(rng: &mut impl Rng, dim: usize, radius: f64) -> ParameterVector {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>();
    ParameterVector::from_raw(v.into_iter().map(|x| x * r / norm).collect())
}

/// Probes an arbitrary update map on `num_pairs` random pairs in the ball of `radius`.
pub fn probe_map(
    dim: usize,
    alpha: f64,
    num_pairs: usize,
    radius: f64,
    seed: u64,
    mut update: impl FnMut(&ParameterVector) -> Result<ParameterVector>,
) -> Result<ExpansivityProbe> {
    if num_pairs == 0 {
        return Err(Error::contract("expansivity probe needs at least one pair"));
    }
    let mut rng = stream(seed, Stream::Probe);
    let mut max_ratio: f64 = 0.0;
    let mut used = 0;
    while used < num_pairs {
        let u = random_point(&mut rng, dim, radius);
        let v = random_point(&mut rng, dim, radius);
        let gap = u.distance(&v);
        if gap == 0.0 {
            continue;
        }
        let ratio = update(&u)?.distance(&update(&v)?) / gap;
        max_ratio = max_ratio.max(ratio);
        used += 1;
    }
    Ok(ExpansivityProbe {
        alpha,
        num_pairs,
        max_ratio,
    })
}

/// Expansivity of one full-batch step `w ↦ w − α ∇R_S(w)` on random pairs with norm at
/// most `radius`.
pub fn probe_expansivity(
    model: &LossModel,
    data: &Dataset,
    alpha: f64,
    num_pairs: usize,
    radius: f64,
    seed: u64,
) -> Result<ExpansivityProbe> {
    probe_map(model.param_dim(), alpha, num_pairs, radius, seed, |w| {
        let mut next = w.clone();
        next.add_scaled(-alpha, &model.grad_batch(w, data.samples())?);
        Ok(next)
    })
}

/// Compares the final twin gap with the mean gap over the last `k` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TailExpansionCheck {
    pub final_gap: f64,
    pub mean_gap: f64,
    pub factor: f64,
}

impl TailExpansionCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.final_gap <= self.factor * self.mean_gap + tol
    }
}

/// With a constant rate `c/T` and no step in the last `k - 1` touching the differing
/// sample, every step is `(1 + cβ/T)`-expansive, so
/// `‖w_T − w′_T‖ ≤ e^{cβk/T} · (1/k) Σ_{i=T−k+1..T} ‖w_i − w′_i‖`.
///
/// Returns `None` when the tail window does touch the differing sample, in which case the
/// inequality need not hold.
pub fn check_tail_expansion(
    run: &TwinRun,
    k: usize,
    c: f64,
    beta: f64,
) -> Result<Option<TailExpansionCheck>> {
    let (a, b) = (&run.trajectory, &run.trajectory_prime);
    let t = a.step_count;
    if k == 0 || k > t {
        return Err(Error::contract(format!("tail window k={k} outside 1..={t}")));
    }
    let idx = a
        .indices
        .as_ref()
        .ok_or_else(|| Error::contract("twin run did not record indices"))?;
    if idx[t + 1 - k..].iter().skip(1).any(|batch| batch.contains(&run.pair.differing_index)) {
        return Ok(None);
    }
    let gap = |s: usize| -> Result<f64> {
        match (a.iterate_at(s), b.iterate_at(s)) {
            (Some(x), Some(y)) => Ok(x.distance(y)),
            _ => Err(Error::contract(format!("iterate {s} not retained"))),
        }
    };
    let mut sum = 0.0;
    for s in t + 1 - k..=t {
        sum += gap(s)?;
    }
    Ok(Some(TailExpansionCheck {
        final_gap: gap(t)?,
        mean_gap: sum / k as f64,
        factor: (c * beta * k as f64 / t as f64).exp(),
    }))
}
