//! Direct and incremental checkpoint averages.
//!
//! The direct form sums the masked iterates. The incremental form keeps the last `K`
//! step displacements `u_i = w_{i-1} - w_i` (equal to `α_i ∇F(w_{i-1}, z_i)` for an
//! unprojected step) and moves the previous average by
//!
//! ```text
//! w̄_T = w̄_{T-1} - (1/m) Σ_{j=1..K} ρ_j u_{T-K+j}
//! ```
//!
//! which needs `O(K)` memory and no stored iterates once warm.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::ParameterVector;
use crate::schedule::{AveragingScheme, SchemeKind};

/// `(1/m) Σ ρ_j w_{t_j}` over a mask of `m` entries.
pub fn direct_average<'a>(
    mask: &[(usize, f64)],
    iterate_at: impl Fn(usize) -> &'a ParameterVector,
) -> ParameterVector {
    assert!(!mask.is_empty(), "empty checkpoint mask");
    let mut acc = vec![0.0; iterate_at(mask[0].0).dim()];
    for &(step, weight) in mask {
        for (a, v) in acc.iter_mut().zip(iterate_at(step).as_slice()) {
            *a += weight * v;
        }
    }
    let m = mask.len() as f64;
    acc.iter_mut().for_each(|a| *a /= m);
    ParameterVector::from_raw(acc)
}

#[derive(Debug, Clone)]
pub struct AveragerState {
    /// Weights over the `K` most recent steps, oldest first.
    rho: Vec<f64>,
    divisor: f64,
    uniform: Option<f64>,
    /// The last `K` displacement terms, oldest first.
    window: VecDeque<ParameterVector>,
    /// Iterates collected until the first full window is available.
    warmup: Vec<ParameterVector>,
    current: Option<ParameterVector>,
    /// Σ window, maintained when all weights are equal.
    window_sum: Option<ParameterVector>,
    pushes_since_resum: usize,
    steps_seen: usize,
}

impl AveragerState {
    /// Averager over a window of `rho.len()` steps normalised by `divisor`.
    pub fn new(rho: Vec<f64>, divisor: f64) -> Result<Self> {
        if rho.is_empty() {
            return Err(Error::contract("averaging window must be non-empty"));
        }
        if !(divisor > 0.0 && divisor.is_finite()) {
            return Err(Error::contract("averaging divisor must be positive"));
        }
        let first = rho[0];
        let uniform = rho.iter().all(|r| *r == first).then_some(first);
        Ok(Self {
            window: VecDeque::with_capacity(rho.len() + 1),
            warmup: Vec::with_capacity(rho.len()),
            rho,
            divisor,
            uniform,
            current: None,
            window_sum: None,
            pushes_since_resum: 0,
            steps_seen: 0,
        })
    }

    /// Averager matching `scheme`'s mask once warm. `None` for SWA, whose window grows
    /// with the run.
    pub fn for_scheme(scheme: &AveragingScheme) -> Option<Self> {
        let span = scheme.span()?;
        let (rho, divisor) = match scheme.kind() {
            SchemeKind::Lawa => {
                let d = scheme.d();
                let rho = (0..span)
                    .map(|j| if (span - 1 - j) % d == 0 { 1.0 } else { 0.0 })
                    .collect();
                (rho, scheme.k() as f64)
            }
            SchemeKind::Swa => unreachable!(),
            _ => (scheme.rho().to_vec(), scheme.k() as f64),
        };
        Some(Self::new(rho, divisor).expect("valid scheme weights"))
    }

    pub fn span(&self) -> usize {
        self.rho.len()
    }

    pub fn steps_seen(&self) -> usize {
        self.steps_seen
    }

    pub fn is_warm(&self) -> bool {
        self.current.is_some()
    }

    pub fn current_average(&self) -> Option<&ParameterVector> {
        self.current.as_ref()
    }

    /// Records step `t`'s displacement `update = w_{t-1} - w_t` and new iterate `w_t`.
    /// Before the first full window the iterates are buffered; afterwards the average
    /// moves incrementally.
    pub fn observe(&mut self, update: &ParameterVector, iterate: &ParameterVector) -> Result<()> {
        if self.is_warm() {
            return self.incremental_update(update);
        }
        self.steps_seen += 1;
        self.push(update.clone());
        self.warmup.push(iterate.clone());
        if self.warmup.len() == self.span() {
            let rho = &self.rho;
            let mut acc = vec![0.0; iterate.dim()];
            for (w, r) in self.warmup.iter().zip(rho) {
                for (a, v) in acc.iter_mut().zip(w.as_slice()) {
                    *a += r * v;
                }
            }
            acc.iter_mut().for_each(|a| *a /= self.divisor);
            self.current = Some(ParameterVector::from_raw(acc));
            self.warmup = Vec::new();
            self.resum();
        }
        Ok(())
    }

    /// One step of the incremental recursion. Fails before warm-up completes.
    pub fn incremental_update(&mut self, update: &ParameterVector) -> Result<()> {
        if !self.is_warm() {
            return Err(Error::contract(format!(
                "incremental averaging needs {} observed steps, have {}",
                self.span(),
                self.steps_seen
            )));
        }
        self.steps_seen += 1;
        let evicted = self.push(update.clone());
        let scale = -1.0 / self.divisor;
        let current = self.current.as_mut().expect("warm");
        match self.uniform {
            Some(r) => {
                let sum = self.window_sum.as_mut().expect("uniform window sum");
                sum.add_scaled(1.0, update);
                if let Some(old) = &evicted {
                    sum.add_scaled(-1.0, old);
                }
                self.pushes_since_resum += 1;
                current.add_scaled(scale * r, sum);
                if self.pushes_since_resum >= self.rho.len() {
                    self.resum();
                }
            }
            None => {
                for (term, r) in self.window.iter().zip(&self.rho) {
                    if *r != 0.0 {
                        current.add_scaled(scale * r, term);
                    }
                }
            }
        }
        Ok(())
    }

    fn push(&mut self, update: ParameterVector) -> Option<ParameterVector> {
        self.window.push_back(update);
        if self.window.len() > self.rho.len() {
            self.window.pop_front()
        } else {
            None
        }
    }

    /// Recomputes the running window sum from scratch to stop rounding drift.
    fn resum(&mut self) {
        if self.uniform.is_none() {
            return;
        }
        let mut sum = ParameterVector::zeros(self.window[0].dim());
        for term in &self.window {
            sum.add_scaled(1.0, term);
        }
        self.window_sum = Some(sum);
        self.pushes_since_resum = 0;
    }
}
