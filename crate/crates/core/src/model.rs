//! Parameter vectors, samples and loss models.
//!
//! Every model keeps its weights in one flat [`ParameterVector`]. The bias is treated as
//! the weight of an implicit constant-1 feature appended to the input, so a linear model
//! over `d` inputs has `d + 1` parameters.
//!
//! Per-sample losses:
//!
//! - [`LossModel::LinearRegressionMse`]: `(w·x̃ - y)²` (no ½ factor).
//! - [`LossModel::LogisticRegression`]: `log(1 + e^s) - y·s` with `s = w·x̃`, `y ∈ {0, 1}`.
//! - [`LossModel::TinyMlp`]: one tanh hidden layer with a linear head, squared error.
//!
//! Gradients are hand-derived; there is no autodiff.

use crate::error::{Error, Result};

/// Flat dense weight vector. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::contract("parameter vector must be non-empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(
                None,
                format!("parameter entry {i} is not finite ({})", values[i]),
            ));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "parameter vector must be non-empty");
        Self(vec![0.0; dim])
    }

    /// Wraps values produced by internal arithmetic; callers check finiteness where it matters.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// Euclidean distance `‖self - other‖`.
    pub fn distance(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, scale: f64, other: &Self) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    pub fn scaled(&self, scale: f64) -> Self {
        Self(self.0.iter().map(|v| v * scale).collect())
    }

    /// Rescales onto the closed l2 ball of `radius` when outside it.
    pub fn project_to_ball(&mut self, radius: f64) {
        let norm = self.norm();
        if norm > radius {
            let s = radius / norm;
            for v in &mut self.0 {
                *v *= s;
            }
        }
    }
}

/// One example: a feature vector and a real target (a `{0, 1}` label for classification).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: f64,
}

impl Sample {
    pub fn new(features: Vec<f64>, target: f64) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::contract("sample must have at least one feature"));
        }
        if !target.is_finite() || features.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(None, "sample contains non-finite values"));
        }
        Ok(Self { features, target })
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossModel {
    LinearRegressionMse { input_dim: usize },
    LogisticRegression { input_dim: usize },
    /// Single tanh hidden layer of `hidden` units, linear output, squared-error loss.
    TinyMlp { input_dim: usize, hidden: usize },
}

impl LossModel {
    pub fn linear(input_dim: usize) -> Result<Self> {
        check_positive("input_dim", input_dim)?;
        Ok(Self::LinearRegressionMse { input_dim })
    }

    pub fn logistic(input_dim: usize) -> Result<Self> {
        check_positive("input_dim", input_dim)?;
        Ok(Self::LogisticRegression { input_dim })
    }

    pub fn tiny_mlp(input_dim: usize, hidden: usize) -> Result<Self> {
        check_positive("input_dim", input_dim)?;
        check_positive("hidden", hidden)?;
        Ok(Self::TinyMlp { input_dim, hidden })
    }

    pub fn input_dim(&self) -> usize {
        match *self {
            Self::LinearRegressionMse { input_dim }
            | Self::LogisticRegression { input_dim }
            | Self::TinyMlp { input_dim, .. } => input_dim,
        }
    }

    pub fn param_dim(&self) -> usize {
        match *self {
            Self::LinearRegressionMse { input_dim } | Self::LogisticRegression { input_dim } => {
                input_dim + 1
            }
            Self::TinyMlp { input_dim, hidden } => (input_dim + 1) * hidden + hidden + 1,
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, Self::TinyMlp { .. })
    }

    pub fn is_classifier(&self) -> bool {
        matches!(self, Self::LogisticRegression { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::LinearRegressionMse { .. } => "linear",
            Self::LogisticRegression { .. } => "logistic",
            Self::TinyMlp { .. } => "mlp",
        }
    }

    /// Raw model output: the prediction for regression models, the logit for logistic.
    pub fn predict(&self, w: &ParameterVector, features: &[f64]) -> Result<f64> {
        self.check_dims(w, features)?;
        Ok(self.forward(w.as_slice(), features))
    }

    /// `F(w; z)`.
    pub fn loss(&self, w: &ParameterVector, z: &Sample) -> Result<f64> {
        self.check_dims(w, &z.features)?;
        let value = self.loss_unchecked(w.as_slice(), z);
        if !value.is_finite() {
            return Err(Error::numeric(None, format!("loss evaluated to {value}")));
        }
        Ok(value)
    }

    /// `∇_w F(w; z)`.
    pub fn grad_sample(&self, w: &ParameterVector, z: &Sample) -> Result<ParameterVector> {
        self.check_dims(w, &z.features)?;
        let mut out = vec![0.0; self.param_dim()];
        self.accumulate(w.as_slice(), z, 1.0, &mut out);
        Ok(ParameterVector::from_raw(out))
    }

    /// Mean of per-sample gradients over a non-empty batch.
    pub fn grad_batch(&self, w: &ParameterVector, batch: &[Sample]) -> Result<ParameterVector> {
        if batch.is_empty() {
            return Err(Error::contract("gradient of an empty batch"));
        }
        for z in batch {
            self.check_dims(w, &z.features)?;
        }
        let mut out = vec![0.0; self.param_dim()];
        let scale = 1.0 / batch.len() as f64;
        for z in batch {
            self.accumulate(w.as_slice(), z, scale, &mut out);
        }
        Ok(ParameterVector::from_raw(out))
    }

    /// Mean gradient and mean loss over `samples[idx]` for each index in `indices`.
    ///
    /// Dimensions are assumed to have been validated when the dataset was checked
    /// against the model.
    pub(crate) fn grad_indexed(
        &self,
        w: &[f64],
        samples: &[Sample],
        indices: &[usize],
        out: &mut [f64],
    ) -> f64 {
        out.iter_mut().for_each(|v| *v = 0.0);
        let scale = 1.0 / indices.len() as f64;
        indices
            .iter()
            .map(|&i| self.accumulate(w, &samples[i], scale, out))
            .sum::<f64>()
            * scale
    }

    /// Empirical risk `R_S[w] = (1/n) Σ F(w; z_i)`.
    pub fn empirical_risk(&self, w: &ParameterVector, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::contract("empirical risk of an empty sample set"));
        }
        let mut total = 0.0;
        for z in samples {
            total += self.loss(w, z)?;
        }
        Ok(total / samples.len() as f64)
    }

    /// Fraction of misclassified samples (threshold at logit 0). Only meaningful for
    /// the logistic model.
    pub fn error_rate(&self, w: &ParameterVector, samples: &[Sample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::contract("error rate of an empty sample set"));
        }
        let mut wrong = 0usize;
        for z in samples {
            let label = if self.predict(w, &z.features)? >= 0.0 { 1.0 } else { 0.0 };
            if label != z.target {
                wrong += 1;
            }
        }
        Ok(wrong as f64 / samples.len() as f64)
    }

    pub(crate) fn check_dims(&self, w: &ParameterVector, features: &[f64]) -> Result<()> {
        if w.dim() != self.param_dim() {
            return Err(Error::contract(format!(
                "parameter dimension {} does not match model ({})",
                w.dim(),
                self.param_dim()
            )));
        }
        if features.len() != self.input_dim() {
            return Err(Error::contract(format!(
                "feature dimension {} does not match model input ({})",
                features.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn forward(&self, w: &[f64], x: &[f64]) -> f64 {
        match *self {
            Self::LinearRegressionMse { .. } | Self::LogisticRegression { .. } => affine(w, x),
            Self::TinyMlp { input_dim, hidden } => {
                let (first, head) = w.split_at((input_dim + 1) * hidden);
                let mut out = head[hidden];
                for (j, row) in first.chunks_exact(input_dim + 1).enumerate() {
                    out += head[j] * affine(row, x).tanh();
                }
                out
            }
        }
    }

    fn loss_unchecked(&self, w: &[f64], z: &Sample) -> f64 {
        let out = self.forward(w, &z.features);
        match self {
            Self::LogisticRegression { .. } => softplus(out) - z.target * out,
            _ => (out - z.target) * (out - z.target),
        }
    }

    /// Adds `scale · ∇F(w; z)` into `out` and returns `F(w; z)`.
    fn accumulate(&self, w: &[f64], z: &Sample, scale: f64, out: &mut [f64]) -> f64 {
        let x = &z.features;
        match *self {
            Self::LinearRegressionMse { input_dim } => {
                let r = affine(w, x) - z.target;
                let g = 2.0 * r * scale;
                for (o, xi) in out[..input_dim].iter_mut().zip(x) {
                    *o += g * xi;
                }
                out[input_dim] += g;
                r * r
            }
            Self::LogisticRegression { input_dim } => {
                let s = affine(w, x);
                let g = (sigmoid(s) - z.target) * scale;
                for (o, xi) in out[..input_dim].iter_mut().zip(x) {
                    *o += g * xi;
                }
                out[input_dim] += g;
                softplus(s) - z.target * s
            }
            Self::TinyMlp { input_dim, hidden } => {
                let split = (input_dim + 1) * hidden;
                let (first, head) = w.split_at(split);
                // Forward pass, keeping hidden activations for backprop.
                let mut acts = Vec::with_capacity(hidden);
                let mut y_hat = head[hidden];
                for (j, row) in first.chunks_exact(input_dim + 1).enumerate() {
                    let h = affine(row, x).tanh();
                    y_hat += head[j] * h;
                    acts.push(h);
                }
                let r = y_hat - z.target;
                let g = 2.0 * r * scale;
                let (out_first, out_head) = out.split_at_mut(split);
                for (j, h) in acts.iter().enumerate() {
                    out_head[j] += g * h;
                    let delta = g * head[j] * (1.0 - h * h);
                    let row = &mut out_first[j * (input_dim + 1)..(j + 1) * (input_dim + 1)];
                    for (o, xi) in row[..input_dim].iter_mut().zip(x) {
                        *o += delta * xi;
                    }
                    row[input_dim] += delta;
                }
                out_head[hidden] += g;
                r * r
            }
        }
    }
}

fn check_positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::contract(format!("{name} must be positive")));
    }
    Ok(())
}

/// `w[..d]·x + w[d]`
fn affine(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}
