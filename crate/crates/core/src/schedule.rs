//! Learning-rate schedules and checkpoint averaging schemes.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRateSchedule {
    Constant { alpha: f64 },
    /// `α_t = c / t`
    InverseT { c: f64 },
    /// `α_t = c / √t`
    InverseSqrtT { c: f64 },
    /// Piecewise-constant decay over `stages` equal fractions of `horizon` steps.
    ///
    /// Stage `j` uses `start / √(1 + j·q)` with `q = ((start/end)² - 1) / (stages - 1)`, so
    /// the first stage runs at `start`, the last at `end`, and `start = 2·end` over four
    /// stages gives `start/√1, start/√2, start/√3, start/√4`.
    StepDecay {
        start: f64,
        end: f64,
        stages: usize,
        horizon: usize,
    },
}

impl LearningRateSchedule {
    pub fn constant(alpha: f64) -> Result<Self> {
        check_rate("alpha", alpha)?;
        Ok(Self::Constant { alpha })
    }

    pub fn inverse_t(c: f64) -> Result<Self> {
        check_rate("c", c)?;
        Ok(Self::InverseT { c })
    }

    pub fn inverse_sqrt_t(c: f64) -> Result<Self> {
        check_rate("c", c)?;
        Ok(Self::InverseSqrtT { c })
    }

    pub fn step_decay(start: f64, end: f64, stages: usize, horizon: usize) -> Result<Self> {
        check_rate("start", start)?;
        check_rate("end", end)?;
        if stages == 0 || horizon == 0 {
            return Err(Error::Config("step decay needs stages >= 1 and horizon >= 1".into()));
        }
        Ok(Self::StepDecay {
            start,
            end,
            stages,
            horizon,
        })
    }

    /// Replaces the horizon of a step-decay schedule; other variants are unchanged.
    pub fn with_horizon(self, horizon: usize) -> Self {
        match self {
            Self::StepDecay {
                start, end, stages, ..
            } => Self::StepDecay {
                start,
                end,
                stages,
                horizon: horizon.max(1),
            },
            other => other,
        }
    }

    /// `α_t` for `t >= 1`.
    pub fn rate_at(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::contract("learning rates are indexed from t = 1"));
        }
        let tf = t as f64;
        Ok(match *self {
            Self::Constant { alpha } => alpha,
            Self::InverseT { c } => c / tf,
            Self::InverseSqrtT { c } => c / tf.sqrt(),
            Self::StepDecay {
                start,
                end,
                stages,
                horizon,
            } => {
                if stages == 1 {
                    start
                } else {
                    let stage = ((t - 1) * stages / horizon).min(stages - 1);
                    let q = ((start / end).powi(2) - 1.0) / (stages - 1) as f64;
                    start / (1.0 + stage as f64 * q).sqrt()
                }
            }
        })
    }

    pub fn is_non_increasing(&self) -> bool {
        match *self {
            Self::StepDecay { start, end, .. } => end <= start,
            _ => true,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Self::Constant { alpha } => format!("constant_{alpha}"),
            Self::InverseT { c } => format!("inverse_t_{c}"),
            Self::InverseSqrtT { c } => format!("inverse_sqrt_t_{c}"),
            Self::StepDecay {
                start, end, stages, ..
            } => format!("step_decay_{start}_{end}_{stages}"),
        }
    }
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("learning rate {name} must be positive, got {v}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Sgd,
    /// Tail averaging of the last `k` iterates, optionally weighted.
    Fwa,
    /// `k` checkpoints taken every `d` steps.
    Lawa,
    /// Mean of every iterate `w_1..w_T`.
    Swa,
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sgd => "sgd",
            Self::Fwa => "fwa",
            Self::Lawa => "lawa",
            Self::Swa => "swa",
        })
    }
}

/// Which iterates are averaged and with what weights.
///
/// The average over a mask of `m` entries is `(1/m) Σ ρ_j w_{t_j}`, which for FWA is the
/// weighted tail average with the `1/k` normaliser.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragingScheme {
    kind: SchemeKind,
    k: usize,
    d: usize,
    rho: Vec<f64>,
}

impl AveragingScheme {
    pub fn sgd() -> Self {
        Self {
            kind: SchemeKind::Sgd,
            k: 1,
            d: 1,
            rho: vec![1.0],
        }
    }

    pub fn fwa(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("FWA window k must be positive".into()));
        }
        Ok(Self {
            kind: SchemeKind::Fwa,
            k,
            d: 1,
            rho: vec![1.0; k],
        })
    }

    /// FWA with explicit weights `ρ_1..ρ_k` (oldest first).
    pub fn fwa_weighted(rho: Vec<f64>) -> Result<Self> {
        if rho.is_empty() {
            return Err(Error::Config("weight sequence must be non-empty".into()));
        }
        if rho.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || rho.iter().all(|r| *r == 0.0) {
            return Err(Error::Config(
                "weights must be finite, non-negative and not all zero".into(),
            ));
        }
        Ok(Self {
            kind: SchemeKind::Fwa,
            k: rho.len(),
            d: 1,
            rho,
        })
    }

    pub fn lawa(k: usize, d: usize) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::Config("LAWA needs k >= 1 and d >= 1".into()));
        }
        Ok(Self {
            kind: SchemeKind::Lawa,
            k,
            d,
            rho: vec![1.0; k],
        })
    }

    pub fn swa() -> Self {
        Self {
            kind: SchemeKind::Swa,
            k: 0,
            d: 1,
            rho: Vec::new(),
        }
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    /// Window length in checkpoints; for SWA this is the run length `t`.
    pub fn k_at(&self, t: usize) -> usize {
        match self.kind {
            SchemeKind::Swa => t,
            _ => self.k,
        }
    }

    /// Configured `k`, `0` for SWA (resolved at evaluation time).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Weights `ρ_1..ρ_k`, oldest checkpoint first. Empty for SWA.
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn has_uniform_weights(&self) -> bool {
        self.rho.iter().all(|r| *r == self.rho.first().copied().unwrap_or(1.0))
    }

    /// Number of consecutive steps a full window spans, `None` for SWA.
    pub fn span(&self) -> Option<usize> {
        match self.kind {
            SchemeKind::Swa => None,
            _ => Some((self.k - 1) * self.d + 1),
        }
    }

    /// Smallest `T` for which [`checkpoint_mask`](Self::checkpoint_mask) is defined.
    pub fn min_steps(&self) -> usize {
        match self.kind {
            SchemeKind::Swa | SchemeKind::Sgd => 1,
            SchemeKind::Fwa => self.k,
            SchemeKind::Lawa => self.k * self.d,
        }
    }

    /// The `(step, weight)` pairs averaged at step `t`, oldest first.
    pub fn checkpoint_mask(&self, t: usize) -> Result<Vec<(usize, f64)>> {
        let min = self.min_steps();
        if t < min {
            return Err(Error::Config(format!(
                "{self} needs at least {min} steps, got T = {t}"
            )));
        }
        Ok(self.available_mask(t))
    }

    /// Like `checkpoint_mask`, but before the window fills it keeps whichever
    /// checkpoints already exist (at least one for `t >= 1`).
    pub fn available_mask(&self, t: usize) -> Vec<(usize, f64)> {
        if t == 0 {
            return Vec::new();
        }
        match self.kind {
            SchemeKind::Swa => (1..=t).map(|s| (s, 1.0)).collect(),
            SchemeKind::Sgd => vec![(t, 1.0)],
            SchemeKind::Fwa => {
                let m = self.k.min(t);
                let skip = self.k - m;
                (0..m).map(|j| (t + 1 - m + j, self.rho[skip + j])).collect()
            }
            SchemeKind::Lawa => {
                let m = self.k.min((t - 1) / self.d + 1);
                (0..m).map(|j| (t - (m - 1 - j) * self.d, 1.0)).collect()
            }
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            SchemeKind::Sgd => "sgd".into(),
            SchemeKind::Swa => "swa".into(),
            SchemeKind::Fwa if self.has_uniform_weights() => format!("fwa_k{}", self.k),
            SchemeKind::Fwa => format!("fwa_weighted_k{}", self.k),
            SchemeKind::Lawa => format!("lawa_k{}_d{}", self.k, self.d),
        }
    }
}

impl fmt::Display for AveragingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rate_examples() {
        let s = LearningRateSchedule::inverse_sqrt_t(0.4).unwrap();
        assert!((s.rate_at(4).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(LearningRateSchedule::inverse_t(0.4).unwrap().rate_at(2).unwrap(), 0.2);
        let c = LearningRateSchedule::constant(0.1).unwrap();
        assert_eq!(c.rate_at(1).unwrap(), 0.1);
        assert_eq!(c.rate_at(123_456).unwrap(), 0.1);
        assert!(matches!(c.rate_at(0), Err(Error::Contract(_))));
        assert!(LearningRateSchedule::constant(0.0).is_err());
        assert!(LearningRateSchedule::inverse_t(-1.0).is_err());
    }

    #[test]
    fn step_decay_halves_over_four_stages() {
        let s = LearningRateSchedule::step_decay(0.4, 0.2, 4, 100).unwrap();
        let expect = [0.4, 0.4 / 2f64.sqrt(), 0.4 / 3f64.sqrt(), 0.2];
        for (stage, e) in expect.iter().enumerate() {
            for t in stage * 25 + 1..=(stage + 1) * 25 {
                assert!((s.rate_at(t).unwrap() - e).abs() < 1e-15, "t={t}");
            }
        }
        // Past the horizon the last stage persists.
        assert!((s.rate_at(1000).unwrap() - 0.2).abs() < 1e-15);
        let one = LearningRateSchedule::step_decay(0.3, 0.1, 1, 10).unwrap();
        assert_eq!(one.rate_at(7).unwrap(), 0.3);
    }

    #[test]
    fn masks() {
        assert_eq!(
            AveragingScheme::fwa(3).unwrap().checkpoint_mask(10).unwrap(),
            vec![(8, 1.0), (9, 1.0), (10, 1.0)]
        );
        assert_eq!(
            AveragingScheme::lawa(2, 5).unwrap().checkpoint_mask(10).unwrap(),
            vec![(5, 1.0), (10, 1.0)]
        );
        assert_eq!(AveragingScheme::sgd().checkpoint_mask(7).unwrap(), vec![(7, 1.0)]);
        assert_eq!(AveragingScheme::swa().checkpoint_mask(3).unwrap().len(), 3);
    }

    #[test]
    fn short_runs_are_config_errors() {
        match AveragingScheme::lawa(3, 4).unwrap().checkpoint_mask(11) {
            Err(Error::Config(msg)) => assert!(msg.contains("12"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(AveragingScheme::fwa(5).unwrap().checkpoint_mask(4).is_err());
    }

    #[test]
    fn warmup_keeps_existing_checkpoints() {
        let lawa = AveragingScheme::lawa(4, 5).unwrap();
        assert_eq!(lawa.available_mask(12), vec![(2, 1.0), (7, 1.0), (12, 1.0)]);
        assert_eq!(lawa.available_mask(3), vec![(3, 1.0)]);
        let fwa = AveragingScheme::fwa_weighted(vec![0.5, 1.0, 2.0]).unwrap();
        assert_eq!(fwa.available_mask(2), vec![(1, 1.0), (2, 2.0)]);
    }

    #[test]
    fn scheme_validation() {
        assert!(AveragingScheme::fwa(0).is_err());
        assert!(AveragingScheme::lawa(2, 0).is_err());
        assert!(AveragingScheme::fwa_weighted(vec![0.0, 0.0]).is_err());
        assert!(AveragingScheme::fwa_weighted(vec![1.0, -1.0]).is_err());
        assert_eq!(AveragingScheme::lawa(5, 10).unwrap().label(), "lawa_k5_d10");
    }

    proptest! {
        #[test]
        fn lawa_with_unit_interval_is_fwa(k in 1usize..50, extra in 0usize..50) {
            let t = k + extra;
            prop_assert_eq!(
                AveragingScheme::lawa(k, 1).unwrap().checkpoint_mask(t).unwrap(),
                AveragingScheme::fwa(k).unwrap().checkpoint_mask(t).unwrap()
            );
        }

        #[test]
        fn unit_window_is_sgd(t in 1usize..1000) {
            let m = AveragingScheme::fwa(1).unwrap().checkpoint_mask(t).unwrap();
            prop_assert_eq!(m, AveragingScheme::sgd().checkpoint_mask(t).unwrap());
        }

        #[test]
        fn masks_have_positive_weight(k in 1usize..20, d in 1usize..8, extra in 0usize..30) {
            let s = AveragingScheme::lawa(k, d).unwrap();
            let m = s.checkpoint_mask(k * d + extra).unwrap();
            prop_assert_eq!(m.len(), k);
            prop_assert!(m.iter().all(|(_, w)| *w >= 0.0));
            prop_assert!(m.iter().any(|(_, w)| *w > 0.0));
            prop_assert!(m.windows(2).all(|p| p[1].0 - p[0].0 == d));
        }

        #[test]
        fn decaying_schedules_are_positive_and_non_increasing(c in 0.01f64..10.0, t in 1usize..100_000) {
            for s in [LearningRateSchedule::inverse_t(c).unwrap(), LearningRateSchedule::inverse_sqrt_t(c).unwrap()] {
                let a = s.rate_at(t).unwrap();
                prop_assert!(a > 0.0);
                prop_assert!(s.rate_at(t + 1).unwrap() <= a);
            }
        }
    }
}
