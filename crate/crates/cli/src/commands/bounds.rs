//! Bound audit: evaluates every closed-form bound over a grid and checks the reduction
//! and monotonicity invariants.

use anyhow::{Context, Result};
use fwa_core::bounds::{
    bound_convergence_fwa, bound_convergence_lawa, bound_convergence_sgd, bound_convex_constant,
    bound_convex_general, bound_convex_swa, bound_nonconvex_constant, bound_nonconvex_decay,
    estimate_constants, nonconvex_constant_exponent, BoundName, BoundResult, DiameterSource,
    ProblemConstants,
};
use fwa_core::optimizer::Trainer;
use fwa_core::{AveragingScheme, LearningRateSchedule};
use serde::Serialize;

use super::{csv_writer, output_dir, write_manifest, CommandSummary};
use crate::config::ExperimentConfig;
use crate::prepare::prepare;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub bound: String,
    pub t: usize,
    pub k: Option<f64>,
    pub d: Option<usize>,
    pub c: Option<f64>,
    pub alpha: Option<f64>,
    pub value: Option<f64>,
    pub exponent: Option<f64>,
    pub order_only: bool,
    pub assumption_violated: bool,
    pub beats_sgd: Option<bool>,
    /// `sgd_equivalent` for `k = 1` rows, or the error that prevented evaluation.
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct BoundsOutput {
    pub constants: ProblemConstants,
    pub rows: Vec<BoundRow>,
    pub invariants: Vec<InvariantCheck>,
    pub summary: CommandSummary,
}

fn result_row(r: fwa_core::Result<BoundResult>, name: BoundName, t: usize, k: Option<f64>, d: Option<usize>, c: Option<f64>, alpha: Option<f64>) -> BoundRow {
    match r {
        Ok(b) => BoundRow {
            bound: b.name.to_string(),
            t,
            k: b.params.k,
            d: b.params.d,
            c: b.params.c.or(c),
            alpha: b.params.alpha.or(alpha),
            value: Some(b.value),
            exponent: b.exponent,
            order_only: b.order_only,
            assumption_violated: b.assumption_violated,
            beats_sgd: b.beats_sgd,
            note: if b.params.k == Some(1.0) { "sgd_equivalent".into() } else { String::new() },
        },
        Err(e) => BoundRow {
            bound: name.to_string(),
            t,
            k,
            d,
            c,
            alpha,
            value: None,
            exponent: None,
            order_only: false,
            assumption_violated: false,
            beats_sgd: None,
            note: format!("error: {e}"),
        },
    }
}

/// Evaluates the bound grid. Errors become row-level notes.
pub fn bound_grid(
    consts: &ProblemConstants,
    t: usize,
    ks: &[usize],
    ds: &[usize],
    decay_ks: &[f64],
    c: f64,
    alpha: f64,
) -> Result<Vec<BoundRow>> {
    let lr = LearningRateSchedule::constant(alpha)?;
    let mut rows = Vec::new();
    for &k in ks {
        let kf = Some(k as f64);
        rows.push(result_row(bound_convex_constant(consts, t, k, alpha), BoundName::ConvexConstant, t, kf, None, None, Some(alpha)));
        rows.push(result_row(
            bound_convex_general(consts, t, k, &vec![1.0; k], &lr).map(|mut b| {
                b.params.alpha = Some(alpha);
                b
            }),
            BoundName::ConvexGeneral,
            t,
            kf,
            None,
            None,
            Some(alpha),
        ));
        rows.push(result_row(bound_nonconvex_constant(consts, t, k, c), BoundName::NonconvexConstant, t, kf, None, Some(c), None));
        rows.push(result_row(bound_convergence_fwa(consts, t, k, c), BoundName::ConvergenceFwa, t, kf, None, Some(c), None));
        for &d in ds {
            rows.push(result_row(bound_convergence_lawa(consts, t, k, d, c), BoundName::ConvergenceLawa, t, kf, Some(d), Some(c), None));
        }
    }
    rows.push(result_row(bound_convex_swa(consts, t, alpha), BoundName::ConvexSwa, t, Some(t as f64), None, None, Some(alpha)));
    rows.push(result_row(bound_convergence_sgd(consts, t, c), BoundName::ConvergenceSgd, t, None, None, Some(c), None));
    for &k in decay_ks {
        rows.push(result_row(bound_nonconvex_decay(consts, t, k, c), BoundName::NonconvexDecay, t, Some(k), None, Some(c), None));
    }
    Ok(rows)
}

fn check(name: &str, passed: bool, detail: String) -> InvariantCheck {
    InvariantCheck {
        name: name.into(),
        passed,
        detail,
    }
}

fn strictly_decreasing(values: &[f64]) -> Option<usize> {
    values.windows(2).position(|w| w[1] >= w[0])
}

/// Reduction and monotonicity invariants at horizon `t`.
pub fn bound_invariants(
    consts: &ProblemConstants,
    t: usize,
    ks: &[usize],
    c: f64,
    alpha: f64,
) -> Result<Vec<InvariantCheck>> {
    let mut out = Vec::new();

    let at_t = bound_convex_constant(consts, t, t, alpha)?.value;
    let swa = bound_convex_swa(consts, t, alpha)?.value;
    out.push(check("convex_constant_k_eq_T_is_swa", at_t == swa, format!("{at_t} vs {swa}")));

    let mut lawa_ok = true;
    for &k in ks.iter().filter(|&&k| k >= 1 && 2 * k <= t) {
        let l = bound_convergence_lawa(consts, t, k, 1, c)?.value;
        let f = bound_convergence_fwa(consts, t, k, c)?.value;
        lawa_ok &= l == f;
    }
    out.push(check("lawa_d1_is_fwa", lawa_ok, format!("k in {ks:?}")));

    let cb = c * consts.beta;
    let e1 = bound_nonconvex_constant(consts, t, 1, c)?.exponent.unwrap_or(f64::NAN);
    let sgd_exp = cb / (1.0 + cb);
    out.push(check("nonconvex_exponent_k1_is_sgd", e1 == sgd_exp, format!("{e1} vs {sgd_exp}")));

    let convex: Vec<f64> = (1..=t)
        .map(|k| bound_convex_constant(consts, t, k, alpha).map(|b| b.value))
        .collect::<fwa_core::Result<_>>()?;
    let bad = strictly_decreasing(&convex);
    out.push(check("convex_constant_decreasing_in_k", bad.is_none(), format!("first violation at k={bad:?}")));

    let fwa: Vec<f64> = (1..=t / 2)
        .map(|k| bound_convergence_fwa(consts, t, k, c).map(|b| b.value))
        .collect::<fwa_core::Result<_>>()?;
    let bad = strictly_decreasing(&fwa);
    out.push(check("convergence_fwa_decreasing_in_k", bad.is_none(), format!("first violation at k={bad:?}")));

    let mut lawa_mono = true;
    for &k in ks.iter().filter(|&&k| k >= 1) {
        let vals: Vec<f64> = (1..=t)
            .filter(|d| t.is_multiple_of(*d) && t / d >= 2 && 2 * k * d <= t)
            .map(|d| bound_convergence_lawa(consts, t, k, d, c).map(|b| b.value))
            .collect::<fwa_core::Result<_>>()?;
        lawa_mono &= vals.windows(2).all(|w| w[1] >= w[0]);
    }
    out.push(check("convergence_lawa_increasing_in_d", lawa_mono, "d | T, 2kd <= T".into()));

    let kmax = ks.iter().copied().max().unwrap_or(1).max(2);
    let exps: Vec<f64> = (1..=kmax).map(|k| nonconvex_constant_exponent(cb, k as f64)).collect();
    let bad = strictly_decreasing(&exps);
    out.push(check("nonconvex_exponent_decreasing_in_k", bad.is_none(), format!("first violation at k={bad:?}")));

    let lr = LearningRateSchedule::constant(alpha)?;
    let gap = alpha * consts.lipschitz * consts.lipschitz / consts.n as f64;
    let mut worst: f64 = 0.0;
    for &k in ks.iter().filter(|&&k| k >= 1 && k <= t) {
        let g = bound_convex_general(consts, t, k, &vec![1.0; k], &lr)?.value;
        let cst = bound_convex_constant(consts, t, k, alpha)?.value;
        worst = worst.max(((g - cst) - gap).abs() / g);
    }
    out.push(check(
        "convex_general_minus_constant_is_alpha_l2_over_n",
        worst <= 1e-12,
        format!("max relative deviation {worst:e}"),
    ));
    Ok(out)
}

pub fn run(cfg: &ExperimentConfig) -> Result<BoundsOutput> {
    let dir = output_dir(cfg)?;
    let b = &cfg.bounds;
    let constants = match &b.constants {
        Some(c) => ProblemConstants::new(c.lipschitz, c.beta, c.g, c.diameter, c.n)?,
        None => {
            let prep = prepare(cfg)?;
            let seed = cfg.seeds[0];
            let reference;
            let diameter = match cfg.run.projection_radius {
                Some(r) => DiameterSource::Projection(r),
                None => {
                    let lr = cfg
                        .lr
                        .first()
                        .context("estimating D without projection needs an [[lr]] for the reference run")?;
                    let rc = cfg.run.run_config(seed);
                    let lr = lr.build(rc.total_steps(prep.train.n()))?;
                    reference = Trainer::new(&prep.model, &prep.train, &lr, &rc)
                        .run(&[AveragingScheme::sgd()])?
                        .trajectory;
                    DiameterSource::Iterates(&reference.iterates)
                }
            };
            estimate_constants(&prep.model, &prep.train, b.probe_radius, b.num_probes, seed, diameter)?
        }
    };

    let rows = bound_grid(&constants, b.t, &b.ks, &b.ds, &b.decay_ks, b.c, b.alpha)?;
    let invariants = bound_invariants(&constants, b.t, &b.ks, b.c, b.alpha)?;

    let mut summary = CommandSummary::default();
    let path = dir.join("bounds.csv");
    let mut w = csv_writer(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    summary.files.push(path);

    let path = dir.join("bounds_checks.csv");
    let mut w = csv_writer(&path)?;
    for c in &invariants {
        w.serialize(c)?;
        if !c.passed {
            summary.failures.push(format!("{}: {}", c.name, c.detail));
        }
    }
    w.flush()?;
    summary.files.push(path);

    #[derive(Serialize)]
    struct Details<'a> {
        lipschitz: f64,
        beta: f64,
        g: f64,
        diameter: f64,
        n: usize,
        source: &'a str,
    }
    summary.files.push(write_manifest(
        &dir,
        "bounds",
        cfg,
        Details {
            lipschitz: constants.lipschitz,
            beta: constants.beta,
            g: constants.g,
            diameter: constants.diameter,
            n: constants.n,
            source: match constants.source {
                fwa_core::bounds::ConstantSource::ClosedForm => "closed_form",
                fwa_core::bounds::ConstantSource::Empirical => "empirical",
            },
        },
    )?);
    Ok(BoundsOutput {
        constants,
        rows,
        invariants,
        summary,
    })
}
