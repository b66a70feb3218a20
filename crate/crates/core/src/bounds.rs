//! Problem constants and closed-form stability and convergence bounds for finite weight
//! averaging.
//!
//! Stability bounds bound the expected loss change when one training example is replaced;
//! convergence bounds bound `E[F(w̄_T) − F(w)]` for any `w` in a domain of diameter `D`.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{LossModel, ParameterVector};
use crate::rng::{stream, Stream};
use crate::schedule::LearningRateSchedule;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantSource {
    ClosedForm,
    Empirical,
}

/// Lipschitz constant `L`, smoothness `β`, gradient bound `G`, diameter `D`, size `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConstants {
    pub lipschitz: f64,
    pub beta: f64,
    pub g: f64,
    pub diameter: f64,
    pub n: usize,
    pub source: ConstantSource,
}

impl ProblemConstants {
    pub fn new(lipschitz: f64, beta: f64, g: f64, diameter: f64, n: usize) -> Result<Self> {
        for (name, v) in [("L", lipschitz), ("beta", beta), ("G", g), ("D", diameter)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("constant {name} must be positive, got {v}")));
            }
        }
        if n == 0 {
            return Err(Error::Config("dataset size n must be positive".into()));
        }
        Ok(Self {
            lipschitz,
            beta,
            g,
            diameter,
            n,
            source: ConstantSource::ClosedForm,
        })
    }
}

/// Where the domain diameter comes from.
#[derive(Debug, Clone, Copy)]
pub enum DiameterSource<'a> {
    /// Iterates are projected onto a ball of this radius, so `D = 2R`.
    Projection(f64),
    /// Largest pairwise distance among these iterates.
    Iterates(&'a [ParameterVector]),
}

fn augmented(features: &[f64]) -> impl Iterator<Item = f64> + '_ {
    features.iter().copied().chain(std::iter::once(1.0))
}

fn augmented_norm_sq(features: &[f64]) -> f64 {
    augmented(features).map(|v| v * v).sum()
}

/// Per-sample smoothness of the squared loss: `2 max_i ‖x̃_i‖²` with `x̃ = (x, 1)`.
pub fn linear_beta(data: &Dataset) -> f64 {
    2.0 * data
        .samples()
        .iter()
        .map(|z| augmented_norm_sq(&z.features))
        .fold(0.0, f64::max)
}

/// Uniform random point of norm at most `radius` (normal direction, uniform radius).
fn ball_point(rng: &mut impl Rng, dim: usize, radius: f64) -> ParameterVector {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>();
    ParameterVector::from_raw(v.into_iter().map(|x| x * r / norm).collect())
}

/// Spectral norm of the per-sample Hessian at `w`, by power iteration on central
/// finite-difference Hessian-vector products.
fn hessian_norm(
    model: &LossModel,
    w: &ParameterVector,
    z: &crate::model::Sample,
    rng: &mut impl Rng,
) -> Result<f64> {
    let p = w.dim();
    let h = 1e-5;
    let mut v = ball_point(rng, p, 1.0);
    if v.norm() == 0.0 {
        v = ParameterVector::from_raw(vec![1.0; p]);
    }
    v = v.scaled(1.0 / v.norm());
    let mut lambda: f64 = 0.0;
    for _ in 0..30 {
        let mut plus = w.clone();
        plus.add_scaled(h, &v);
        let mut minus = w.clone();
        minus.add_scaled(-h, &v);
        let hv = model
            .grad_sample(&plus, z)?
            .sub(&model.grad_sample(&minus, z)?)
            .scaled(0.5 / h);
        let norm = hv.norm();
        if norm == 0.0 {
            break;
        }
        let converged = (norm - lambda).abs() <= 1e-9 * norm;
        lambda = norm;
        v = hv.scaled(1.0 / norm);
        if converged {
            break;
        }
    }
    Ok(lambda)
}

/// Sampled smoothness constant: the largest per-sample gradient-difference ratio over
/// random pairs in the ball, or per-sample Hessian spectral norm at random points.
pub fn empirical_beta(
    model: &LossModel,
    data: &Dataset,
    radius: f64,
    num_probes: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = stream(seed, Stream::Probe);
    let samples = data.samples();
    let p = model.param_dim();
    let mut beta: f64 = 0.0;
    for _ in 0..num_probes {
        let u = ball_point(&mut rng, p, radius);
        let v = ball_point(&mut rng, p, radius);
        let gap = u.distance(&v);
        let z = &samples[rng.random_range(0..samples.len())];
        if gap > 0.0 {
            let diff = model.grad_sample(&u, z)?.distance(&model.grad_sample(&v, z)?);
            beta = beta.max(diff / gap);
        }
    }
    if !model.is_convex() || matches!(model, LossModel::LogisticRegression { .. }) {
        let hess_points = num_probes.min(40);
        let per_point = samples.len().min(50);
        for _ in 0..hess_points {
            let w = ball_point(&mut rng, p, radius);
            for _ in 0..per_point {
                let z = &samples[rng.random_range(0..samples.len())];
                beta = beta.max(hessian_norm(model, &w, z, &mut rng)?);
            }
        }
    }
    Ok(beta)
}

/// Estimates `L`, `β`, `G` over the ball of `probe_radius` and `D` from `diameter`.
///
/// For the linear model every constant is a closed-form supremum over the ball:
/// `‖∇F(w; z)‖ = 2|⟨w, x̃⟩ − y| ‖x̃‖ ≤ 2 (R‖x̃‖ + |y|) ‖x̃‖` and `β = 2 max ‖x̃‖²`.
/// Other models use the maximum over `num_probes` random points (plus the origin) and
/// every sample.
pub fn estimate_constants(
    model: &LossModel,
    data: &Dataset,
    probe_radius: f64,
    num_probes: usize,
    seed: u64,
    diameter: DiameterSource<'_>,
) -> Result<ProblemConstants> {
    if num_probes < 100 {
        return Err(Error::contract(format!("need at least 100 probes, got {num_probes}")));
    }
    if !(probe_radius > 0.0 && probe_radius.is_finite()) {
        return Err(Error::contract("probe radius must be positive"));
    }
    if data.samples().iter().all(|z| z.features.iter().all(|v| *v == 0.0)) {
        return Err(Error::Config("all feature vectors are zero".into()));
    }
    if data.feature_dim() != model.input_dim() {
        return Err(Error::contract("dataset does not match model input dimension"));
    }

    let d = match diameter {
        DiameterSource::Projection(r) => 2.0 * r,
        DiameterSource::Iterates(its) => max_pairwise_distance(its),
    };

    let (lipschitz, beta, source) = match model {
        LossModel::LinearRegressionMse { .. } => {
            let l = data
                .samples()
                .iter()
                .map(|z| {
                    let xn = augmented_norm_sq(&z.features).sqrt();
                    2.0 * (probe_radius * xn + z.target.abs()) * xn
                })
                .fold(0.0, f64::max);
            (l, linear_beta(data), ConstantSource::ClosedForm)
        }
        _ => {
            let mut rng = stream(seed, Stream::Probe);
            let p = model.param_dim();
            let mut l: f64 = 0.0;
            let points = std::iter::once(ParameterVector::zeros(p))
                .chain((0..num_probes).map(|_| ball_point(&mut rng, p, probe_radius)))
                .collect::<Vec<_>>();
            for w in &points {
                for z in data.samples() {
                    l = l.max(model.grad_sample(w, z)?.norm());
                }
            }
            let beta = empirical_beta(model, data, probe_radius, num_probes, seed ^ 0x9e37)?;
            (l, beta, ConstantSource::Empirical)
        }
    };
    let mut c = ProblemConstants::new(lipschitz, beta, lipschitz, d, data.n())?;
    c.source = source;
    Ok(c)
}

fn max_pairwise_distance(its: &[ParameterVector]) -> f64 {
    // Thin long histories to at most 2000 points; the endpoints are always kept.
    let stride = its.len().div_ceil(2000).max(1);
    let mut pts: Vec<&ParameterVector> = its.iter().step_by(stride).collect();
    if let Some(last) = its.last() {
        pts.push(last);
    }
    let mut best: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            best = best.max(pts[i].distance(pts[j]));
        }
    }
    best
}

/// Which bound a [`BoundResult`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundName {
    ConvexGeneral,
    ConvexConstant,
    ConvexSwa,
    NonconvexConstant,
    NonconvexDecay,
    ConvergenceFwa,
    ConvergenceSgd,
    ConvergenceLawa,
    ConvergenceGeneral,
}

impl fmt::Display for BoundName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundName::ConvexGeneral => "convex_general",
            BoundName::ConvexConstant => "convex_constant",
            BoundName::ConvexSwa => "convex_swa",
            BoundName::NonconvexConstant => "nonconvex_constant",
            BoundName::NonconvexDecay => "nonconvex_decay",
            BoundName::ConvergenceFwa => "convergence_fwa",
            BoundName::ConvergenceSgd => "convergence_sgd",
            BoundName::ConvergenceLawa => "convergence_lawa",
            BoundName::ConvergenceGeneral => "convergence_general",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundParams {
    pub t: usize,
    pub k: Option<f64>,
    pub d: Option<usize>,
    pub c: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundResult {
    pub name: BoundName,
    pub value: f64,
    pub params: BoundParams,
    /// Only the order in `T` and `n` is meaningful; the prefactor is set to 1.
    pub order_only: bool,
    /// A step size exceeded `2/β`, so the convex argument does not apply.
    pub assumption_violated: bool,
    /// Exponent of `T` for the non-convex bounds.
    pub exponent: Option<f64>,
    /// For the decaying-rate non-convex bound: whether its exponent is below SGD's.
    pub beats_sgd: Option<bool>,
}

impl BoundResult {
    fn new(name: BoundName, value: f64, params: BoundParams) -> Self {
        Self {
            name,
            value,
            params,
            order_only: false,
            assumption_violated: false,
            exponent: None,
            beats_sgd: None,
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

fn check_window(t: usize, k: usize) -> Result<()> {
    if k == 0 || k > t {
        return Err(Error::contract(format!("window k={k} must satisfy 1 <= k <= T={t}")));
    }
    Ok(())
}

fn rates(lr: &LearningRateSchedule, t: usize) -> Result<Vec<f64>> {
    (1..=t).map(|i| lr.rate_at(i)).collect()
}

/// Convex stability with arbitrary weights and rates:
/// `(2L²/(nk)) (Σ_{t=1..k} Σ_{i=1..t} ρ_i α_i + Σ_{t=k+1..T} Σ_{i=t−k+1..t} ρ_{i−(t−k)} α_i)`.
pub fn bound_convex_general(
    consts: &ProblemConstants,
    t: usize,
    k: usize,
    rho: &[f64],
    lr: &LearningRateSchedule,
) -> Result<BoundResult> {
    check_window(t, k)?;
    if rho.len() != k {
        return Err(Error::contract(format!("expected {k} weights, got {}", rho.len())));
    }
    let alpha = rates(lr, t)?;
    // Prefix sums A(m) = α_1 + ... + α_m, compensated.
    let mut prefix = Vec::with_capacity(t + 1);
    let mut acc = Compensated::default();
    prefix.push(0.0);
    for a in &alpha {
        acc.add(*a);
        prefix.push(acc.value());
    }
    // Ramp-up: α_i ρ_i appears once for every t in i..=k. Steady state: ρ_j multiplies
    // α_{t−k+j} for t = k+1..T, i.e. α_{j+1} + ... + α_{T−k+j}.
    let mut total = Compensated::default();
    for (j, r) in rho.iter().enumerate() {
        let i = j + 1;
        total.add(r * alpha[i - 1] * (k - i + 1) as f64);
        total.add(r * (prefix[t - k + i] - prefix[i]));
    }
    let l2 = consts.lipschitz * consts.lipschitz;
    let value = 2.0 * l2 / (consts.n as f64 * k as f64) * total.value();
    let mut res = BoundResult::new(
        BoundName::ConvexGeneral,
        value,
        BoundParams {
            t,
            k: Some(k as f64),
            ..Default::default()
        },
    );
    res.assumption_violated = alpha.iter().any(|a| *a > 2.0 / consts.beta);
    Ok(res)
}

/// Convex stability with constant rate `α`: `(2αL²/n)(T − k/2)`.
pub fn bound_convex_constant(
    consts: &ProblemConstants,
    t: usize,
    k: usize,
    alpha: f64,
) -> Result<BoundResult> {
    check_window(t, k)?;
    let l2 = consts.lipschitz * consts.lipschitz;
    // 2(T − k/2) = 2T − k is an exact integer, so k = T gives αL²T/n bit for bit.
    let value = alpha * l2 * (2 * t - k) as f64 / consts.n as f64;
    let mut res = BoundResult::new(
        BoundName::ConvexConstant,
        value,
        BoundParams {
            t,
            k: Some(k as f64),
            alpha: Some(alpha),
            ..Default::default()
        },
    );
    res.assumption_violated = alpha > 2.0 / consts.beta;
    Ok(res)
}

/// Convex stability of the full average (`k = T`) at constant rate: `αL²T/n`.
pub fn bound_convex_swa(consts: &ProblemConstants, t: usize, alpha: f64) -> Result<BoundResult> {
    check_window(t, t)?;
    let l2 = consts.lipschitz * consts.lipschitz;
    let mut res = BoundResult::new(
        BoundName::ConvexSwa,
        alpha * l2 * t as f64 / consts.n as f64,
        BoundParams {
            t,
            k: Some(t as f64),
            alpha: Some(alpha),
            ..Default::default()
        },
    );
    res.assumption_violated = alpha > 2.0 / consts.beta;
    Ok(res)
}

/// Exponent `cβ / (cβ + k)` of `T` in the non-convex constant-rate bound.
pub fn nonconvex_constant_exponent(c_beta: f64, k: f64) -> f64 {
    c_beta / (c_beta + k)
}

/// Non-convex stability with rate `c/T`:
/// `(1 + 1/(cβ))/(n − 1) · (2cL²(1 + k e^{cβ})/k)^{k/(cβ+k)} · T^{cβ/(cβ+k)}`.
pub fn bound_nonconvex_constant(
    consts: &ProblemConstants,
    t: usize,
    k: usize,
    c: f64,
) -> Result<BoundResult> {
    let cb = c * consts.beta;
    if !(cb > 0.0 && cb.is_finite()) {
        return Err(Error::contract("c * beta must be positive"));
    }
    if k == 0 {
        return Err(Error::contract("window k must be at least 1"));
    }
    if consts.n < 2 {
        return Err(Error::contract("non-convex bound needs n >= 2"));
    }
    let kf = k as f64;
    let l2 = consts.lipschitz * consts.lipschitz;
    let exponent = nonconvex_constant_exponent(cb, kf);
    let base = 2.0 * c * l2 * (1.0 + kf * cb.exp()) / kf;
    let value = (1.0 + 1.0 / cb) / (consts.n - 1) as f64
        * base.powf(kf / (cb + kf))
        * (t as f64).powf(exponent);
    let mut res = BoundResult::new(
        BoundName::NonconvexConstant,
        value,
        BoundParams {
            t,
            k: Some(kf),
            c: Some(c),
            ..Default::default()
        },
    );
    res.exponent = Some(exponent);
    Ok(res)
}

/// Upper end of the window range where the decaying-rate exponent derivation holds:
/// `(1 + √(1 + 4cβ)) / 2`.
pub fn nonconvex_decay_k_limit(c_beta: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * c_beta).sqrt()) / 2.0
}

/// `k² − k > cβ/(1 − cβ)`: the condition under which the decaying-rate exponent for
/// window `k` is smaller than SGD's.
pub fn fwa_decay_beats_sgd(k: f64, c_beta: f64) -> bool {
    k * k - k > c_beta / (1.0 - c_beta)
}

/// Exponent `(kcβ + c²β²) / (2kcβ + c²β² + k²(1 − cβ))` of the decaying-rate bound.
pub fn nonconvex_decay_exponent(c_beta: f64, k: f64) -> f64 {
    let cb2 = c_beta * c_beta;
    (k * c_beta + cb2) / (2.0 * k * c_beta + cb2 + k * k * (1.0 - c_beta))
}

/// Non-convex stability with rate `c/t`, order form `T^e / n`. The window `k` is real
/// valued because the admissible range `(1, (1+√(1+4cβ))/2)` may contain no integer.
pub fn bound_nonconvex_decay(
    consts: &ProblemConstants,
    t: usize,
    k: f64,
    c: f64,
) -> Result<BoundResult> {
    let cb = c * consts.beta;
    if !(cb > 0.0 && cb < 1.0) {
        return Err(Error::Domain(format!("c * beta = {cb} must lie in (0, 1)")));
    }
    let limit = nonconvex_decay_k_limit(cb);
    if !(k > 1.0 && k < limit) {
        return Err(Error::Domain(format!(
            "window k = {k} must lie in (1, {limit:.6}) = (1, (1 + sqrt(1 + 4 c beta)) / 2)"
        )));
    }
    let exponent = nonconvex_decay_exponent(cb, k);
    let mut res = BoundResult::new(
        BoundName::NonconvexDecay,
        (t as f64).powf(exponent) / consts.n as f64,
        BoundParams {
            t,
            k: Some(k),
            c: Some(c),
            ..Default::default()
        },
    );
    res.order_only = true;
    res.exponent = Some(exponent);
    res.beats_sgd = Some(fwa_decay_beats_sgd(k, cb));
    Ok(res)
}

fn convergence_factor(consts: &ProblemConstants, c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::contract("rate constant c must be positive"));
    }
    let d2 = consts.diameter * consts.diameter;
    Ok(d2 / c + 2.0 * c * consts.g * consts.g)
}

/// Convergence of FWA with `α_t = c/√t`: `((2 + ln(T/(2k)))/√T)(D²/c + 2cG²)`.
pub fn bound_convergence_fwa(
    consts: &ProblemConstants,
    t: usize,
    k: usize,
    c: f64,
) -> Result<BoundResult> {
    if k == 0 || 2 * k > t {
        return Err(Error::Domain(format!("window k={k} must satisfy 1 <= k <= T/2 (T={t})")));
    }
    let factor = convergence_factor(consts, c)?;
    let tf = t as f64;
    let value = (2.0 + (tf / (2.0 * k as f64)).ln()) / tf.sqrt() * factor;
    Ok(BoundResult::new(
        BoundName::ConvergenceFwa,
        value,
        BoundParams {
            t,
            k: Some(k as f64),
            c: Some(c),
            ..Default::default()
        },
    ))
}

/// Last-iterate SGD convergence with `α_t = c/√t`: `((2 + ln T)/√T)(D²/c + 2cG²)`.
pub fn bound_convergence_sgd(consts: &ProblemConstants, t: usize, c: f64) -> Result<BoundResult> {
    if t < 2 {
        return Err(Error::Domain(format!("T={t} must exceed 1")));
    }
    let factor = convergence_factor(consts, c)?;
    let tf = t as f64;
    let value = (2.0 + tf.ln()) / tf.sqrt() * factor;
    Ok(BoundResult::new(
        BoundName::ConvergenceSgd,
        value,
        BoundParams {
            t,
            c: Some(c),
            ..Default::default()
        },
    ))
}

/// LAWA convergence over `E = T/d` intervals: `((2d + d ln(T/(2kd)))/√T)(D²/c + 2cG²)`.
pub fn bound_convergence_lawa(
    consts: &ProblemConstants,
    t: usize,
    k: usize,
    d: usize,
    c: f64,
) -> Result<BoundResult> {
    if d == 0 || !t.is_multiple_of(d) {
        return Err(Error::Config(format!("T={t} is not a multiple of the interval d={d}")));
    }
    if t / d < 2 {
        return Err(Error::Config(format!("T={t} must span more than one interval of {d}")));
    }
    if k == 0 || 2 * k * d > t {
        return Err(Error::Domain(format!(
            "window k={k}, d={d} must satisfy 1 <= kd <= T/2 (T={t})"
        )));
    }
    let factor = convergence_factor(consts, c)?;
    let (tf, df) = (t as f64, d as f64);
    let value = df * (2.0 + (tf / (2.0 * k as f64 * df)).ln()) / tf.sqrt() * factor;
    Ok(BoundResult::new(
        BoundName::ConvergenceLawa,
        value,
        BoundParams {
            t,
            k: Some(k as f64),
            d: Some(d),
            c: Some(c),
            ..Default::default()
        },
    ))
}

/// Weighted convergence bound with `‖w_t − w‖² ≤ D²`:
///
/// ```text
/// Σ_{t=T−k+2..T} D² (ρ_{t−(T−k)}/(2kα_t) − ρ_{t−(T−k+1)}/(2kα_{t−1}))
///   + ρ_1 D² / (2kα_{T−k+1}) + (G²/2k) Σ_{t=T−k+1..T} ρ_{t−(T−k)} α_t
/// ```
///
/// A negative coefficient multiplies a non-negative quantity, so replacing it by `D²`
/// would not bound it from above; such terms are bounded by 0 instead.
pub fn bound_convergence_general(
    consts: &ProblemConstants,
    t: usize,
    k: usize,
    rho: &[f64],
    lr: &LearningRateSchedule,
) -> Result<BoundResult> {
    if k == 0 || 2 * k > t {
        return Err(Error::Domain(format!("window k={k} must satisfy 1 <= k <= T/2 (T={t})")));
    }
    if rho.len() != k {
        return Err(Error::contract(format!("expected {k} weights, got {}", rho.len())));
    }
    let alpha = rates(lr, t)?;
    if let Some(i) = (1..t).find(|&i| alpha[i] > alpha[i - 1]) {
        return Err(Error::Domain(format!(
            "learning rate increases at step {} ({} -> {})",
            i + 1,
            alpha[i - 1],
            alpha[i]
        )));
    }
    let a = |s: usize| alpha[s - 1];
    let r = |j: usize| rho[j - 1];
    let kf = k as f64;
    let d2 = consts.diameter * consts.diameter;
    let start = t - k;

    let mut total = Compensated::default();
    for s in start + 2..=t {
        let coeff = r(s - start) / (2.0 * kf * a(s)) - r(s - start - 1) / (2.0 * kf * a(s - 1));
        total.add(d2 * coeff.max(0.0));
    }
    total.add(r(1) * d2 / (2.0 * kf * a(start + 1)));
    let mut weighted = Compensated::default();
    for s in start + 1..=t {
        weighted.add(r(s - start) * a(s));
    }
    total.add(consts.g * consts.g / (2.0 * kf) * weighted.value());

    Ok(BoundResult::new(
        BoundName::ConvergenceGeneral,
        total.value(),
        BoundParams {
            t,
            k: Some(kf),
            ..Default::default()
        },
    ))
}

/// A minimiser of the empirical risk for suboptimality measurements.
///
/// Linear regression is solved directly by least squares; if a projection radius is
/// given and the solution lies outside the ball, projected gradient descent finishes the
/// job. Other models run full-batch gradient descent (projected when a radius is given)
/// from `start` for at most `max_iters` steps or until the gradient-mapping norm drops
/// below `1e-10`.
pub fn reference_minimizer(
    model: &LossModel,
    data: &Dataset,
    projection_radius: Option<f64>,
    start: &ParameterVector,
    max_iters: usize,
) -> Result<ParameterVector> {
    let step = match model {
        LossModel::LinearRegressionMse { .. } => {
            let w = least_squares(data)?;
            match projection_radius {
                Some(r) if w.norm() > r => {}
                _ => return Ok(w),
            }
            1.0 / linear_full_batch_beta(data)
        }
        _ => {
            let beta = empirical_beta(model, data, start.norm().max(1.0), 100, 0)?;
            1.0 / beta.max(1e-12)
        }
    };
    let mut w = start.clone();
    if let Some(r) = projection_radius {
        w.project_to_ball(r);
    }
    for _ in 0..max_iters {
        let g = model.grad_batch(&w, data.samples())?;
        let mut next = w.clone();
        next.add_scaled(-step, &g);
        if let Some(r) = projection_radius {
            next.project_to_ball(r);
        }
        if !next.is_finite() {
            return Err(Error::numeric(None, "reference descent diverged"));
        }
        let moved = w.distance(&next) / step;
        w = next;
        if moved < 1e-10 {
            break;
        }
    }
    Ok(w)
}

fn design(data: &Dataset) -> (DMatrix<f64>, DVector<f64>) {
    let n = data.n();
    let p = data.feature_dim() + 1;
    let x = DMatrix::from_fn(n, p, |i, j| {
        data.samples()[i].features.get(j).copied().unwrap_or(1.0)
    });
    let y = DVector::from_iterator(n, data.samples().iter().map(|z| z.target));
    (x, y)
}

/// Smoothness of the full-batch squared loss: `2 λ_max(X̃ᵀX̃) / n`.
fn linear_full_batch_beta(data: &Dataset) -> f64 {
    let (x, _) = design(data);
    let gram = x.transpose() * &x;
    let lambda = gram.symmetric_eigenvalues().max();
    2.0 * lambda / data.n() as f64
}

/// Ordinary least squares with bias, via SVD (minimum-norm if rank deficient).
pub fn least_squares(data: &Dataset) -> Result<ParameterVector> {
    let (x, y) = design(data);
    let svd = x.svd(true, true);
    let sol = svd
        .solve(&y, 1e-12)
        .map_err(|e| Error::numeric(None, format!("least squares failed: {e}")))?;
    ParameterVector::new(sol.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic_regression;
    use crate::model::Sample;

    fn consts(l: f64, n: usize) -> ProblemConstants {
        ProblemConstants::new(l, 1.0, 1.0, 1.0, n).unwrap()
    }

    /// Literal double sum, as an independent oracle.
    fn naive_convex_general(c: &ProblemConstants, t: usize, k: usize, rho: &[f64], a: &[f64]) -> f64 {
        let mut s = 0.0;
        for tt in 1..=k {
            for i in 1..=tt {
                s += rho[i - 1] * a[i - 1];
            }
        }
        for tt in k + 1..=t {
            for i in tt - k + 1..=tt {
                s += rho[i - (tt - k) - 1] * a[i - 1];
            }
        }
        2.0 * c.lipschitz.powi(2) / (c.n as f64 * k as f64) * s
    }

    #[test]
    fn convex_general_hand_value() {
        let c = consts(1.0, 100);
        let lr = LearningRateSchedule::constant(0.1).unwrap();
        let r = bound_convex_general(&c, 3, 2, &[1.0, 1.0], &lr).unwrap();
        // Ramp-up α(1 + 2) plus one steady-state window 2α: 0.01 · 0.5.
        assert!((r.value - 0.005).abs() < 1e-15, "{}", r.value);
        // Same as the collapsed form (2αL²/n)(T − (k − 1)/2).
        assert!((r.value - 2.0 * 0.1 / 100.0 * 2.5).abs() < 1e-15);
    }

    #[test]
    fn convex_general_matches_literal_double_sum() {
        let c = ProblemConstants::new(1.3, 2.0, 1.0, 1.0, 57).unwrap();
        let lr = LearningRateSchedule::inverse_sqrt_t(0.3).unwrap();
        let a: Vec<f64> = (1..=40).map(|i| lr.rate_at(i).unwrap()).collect();
        for k in [1, 2, 7, 40] {
            let rho: Vec<f64> = (0..k).map(|j| 0.5 + (j % 3) as f64).collect();
            let fast = bound_convex_general(&c, 40, k, &rho, &lr).unwrap().value;
            let slow = naive_convex_general(&c, 40, k, &rho, &a);
            assert!((fast - slow).abs() <= 1e-13 * slow, "k={k}: {fast} vs {slow}");
        }
    }

    #[test]
    fn convex_constant_examples() {
        let c = consts(1.0, 100);
        let r = bound_convex_constant(&c, 1000, 200, 0.01).unwrap();
        assert!((r.value - 0.18).abs() < 1e-15);
        let swa = bound_convex_constant(&c, 1000, 1000, 0.01).unwrap();
        assert_eq!(swa.value, bound_convex_swa(&c, 1000, 0.01).unwrap().value);
        let sgd_like = bound_convex_constant(&c, 1000, 1, 0.01).unwrap();
        assert!((sgd_like.value - 2.0 * 0.01 * 999.5 / 100.0).abs() < 1e-15);
        assert!(matches!(bound_convex_constant(&c, 10, 11, 0.1), Err(Error::Contract(_))));
        assert!(bound_convex_constant(&c, 10, 2, 3.0).unwrap().assumption_violated);
    }

    #[test]
    fn nonconvex_exponents() {
        assert!((nonconvex_constant_exponent(0.5, 2.0) - 0.2).abs() < 1e-16);
        let e = nonconvex_decay_exponent(0.5, 1.2);
        assert!((e - 0.85 / 2.17).abs() < 1e-15);
        let c = ProblemConstants::new(1.0, 0.5, 1.0, 1.0, 100).unwrap();
        let err = bound_nonconvex_decay(&c, 1000, 2.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::Domain(ref m) if m.contains("window k")), "{err}");
        let ok = bound_nonconvex_decay(&c, 1000, 1.2, 1.0).unwrap();
        assert!(ok.order_only);
        assert_eq!(ok.beats_sgd, Some(false));
        assert!(matches!(bound_nonconvex_decay(&c, 1000, 1.2, 2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn nonconvex_constant_prefactor() {
        let c = ProblemConstants::new(2.0, 0.5, 1.0, 1.0, 101).unwrap();
        let r = bound_nonconvex_constant(&c, 1000, 3, 1.0).unwrap();
        let cb: f64 = 0.5;
        let expected = (1.0 + 1.0 / cb) / 100.0
            * (2.0 * 4.0 * (1.0 + 3.0 * cb.exp()) / 3.0).powf(3.0 / 3.5)
            * 1000f64.powf(0.5 / 3.5);
        assert!((r.value - expected).abs() <= 1e-13 * expected);
    }

    #[test]
    fn convergence_examples() {
        let c = ProblemConstants::new(1.0, 1.0, 2.0, 1.0, 10).unwrap();
        let fwa = bound_convergence_fwa(&c, 10_000, 100, 0.5).unwrap().value;
        assert!((fwa - (2.0 + 50f64.ln()) / 100.0 * 6.0).abs() < 1e-14);
        assert!((fwa - 0.3547).abs() < 5e-5);

        let unit = ProblemConstants::new(1.0, 1.0, 1.0, 1.0, 10).unwrap();
        let sgd = bound_convergence_sgd(&unit, 7, 1.0).unwrap().value;
        assert!((sgd - 4.474).abs() < 5e-4, "{sgd}");

        assert!(matches!(bound_convergence_fwa(&c, 100, 51, 0.5), Err(Error::Domain(_))));
        assert!(matches!(bound_convergence_lawa(&c, 100, 1, 3, 0.5), Err(Error::Config(_))));
        let d10 = bound_convergence_lawa(&c, 10_000, 5, 10, 0.5).unwrap().value;
        let d2 = bound_convergence_lawa(&c, 10_000, 5, 2, 0.5).unwrap().value;
        assert!(d10 > d2);
    }

    #[test]
    fn convergence_general_reductions() {
        let c = ProblemConstants::new(1.0, 1.0, 1.5, 2.0, 10).unwrap();
        let lr = LearningRateSchedule::constant(0.1).unwrap();
        let one = bound_convergence_general(&c, 50, 1, &[1.0], &lr).unwrap().value;
        assert!((one - (4.0 / 0.2 + 2.25 * 0.1 / 2.0)).abs() < 1e-13);

        let inc = LearningRateSchedule::InverseT { c: -1.0 };
        assert!(bound_convergence_general(&c, 50, 2, &[1.0, 1.0], &inc).is_err());

        let sqrt = LearningRateSchedule::inverse_sqrt_t(1.0).unwrap();
        let unit = ProblemConstants::new(1.0, 1.0, 1.0, 1.0, 10).unwrap();
        let v = bound_convergence_general(&unit, 100, 10, &[1.0; 10], &sqrt).unwrap().value;
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn linear_constants() {
        let data = Dataset::new(vec![Sample::new(vec![1.0, 1.0], 0.0).unwrap()]).unwrap();
        assert_eq!(linear_beta(&data), 6.0);
        let model = LossModel::linear(2).unwrap();
        let c = estimate_constants(&model, &data, 1.0, 100, 0, DiameterSource::Projection(1.0))
            .unwrap();
        assert_eq!(c.beta, 6.0);
        assert_eq!(c.diameter, 2.0);
        assert_eq!(c.source, ConstantSource::ClosedForm);

        let zero = Dataset::new(vec![Sample::new(vec![0.0, 0.0], 1.0).unwrap(); 3]).unwrap();
        assert!(matches!(
            estimate_constants(&model, &zero, 1.0, 100, 0, DiameterSource::Projection(1.0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn empirical_beta_never_exceeds_closed_form_for_linear() {
        let data = gen_synthetic_regression(4, 60, 0.2, 3).unwrap().dataset;
        let model = LossModel::linear(4).unwrap();
        let emp = empirical_beta(&model, &data, 3.0, 500, 1).unwrap();
        assert!(emp <= linear_beta(&data) + 1e-8);
        assert!(emp > 0.0);
    }

    #[test]
    fn least_squares_is_stationary() {
        let data = gen_synthetic_regression(5, 80, 0.3, 4).unwrap().dataset;
        let model = LossModel::linear(5).unwrap();
        let w = reference_minimizer(&model, &data, None, &ParameterVector::zeros(6), 0).unwrap();
        assert!(model.grad_batch(&w, data.samples()).unwrap().norm() <= 1e-8);

        // A tight ball forces the projected branch; the result sits on the boundary.
        let r = 0.5 * w.norm();
        let wp = reference_minimizer(&model, &data, Some(r), &ParameterVector::zeros(6), 100_000)
            .unwrap();
        assert!((wp.norm() - r).abs() < 1e-9);
        let risk = |v: &ParameterVector| model.empirical_risk(v, data.samples()).unwrap();
        let mut inside = wp.clone();
        inside.add_scaled(0.01, &ParameterVector::new(vec![0.1, -0.2, 0.0, 0.3, 0.1, 0.0]).unwrap());
        inside.project_to_ball(r);
        assert!(risk(&wp) <= risk(&inside) + 1e-12);
    }
}
