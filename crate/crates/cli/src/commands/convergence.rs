//! Per-step suboptimality `R_S(w̄_t) − R_S(w*)` of every scheme, per seed.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use fwa_core::bounds::reference_minimizer;
use fwa_core::optimizer::Trainer;
use fwa_core::{AveragingScheme, ParameterVector};
use serde::Serialize;

use super::{csv_writer, file_label, output_dir, per_seed, write_manifest, CommandSummary};
use crate::checks::evaluate_chain;
use crate::config::ExperimentConfig;
use crate::prepare::prepare;

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub step: usize,
    pub scheme: String,
    pub k: usize,
    pub d: usize,
    pub seed: u64,
    pub suboptimality: f64,
    pub train_loss: f64,
}

/// Final suboptimality per scheme label, for one learning rate and seed.
#[derive(Debug, Clone)]
pub struct SeedFinals {
    pub seed: u64,
    pub suboptimality: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct LrOutcome {
    pub lr: String,
    pub steps: usize,
    pub finals: Vec<SeedFinals>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub optimum: ParameterVector,
    pub optimum_risk: f64,
    pub outcomes: Vec<LrOutcome>,
    pub summary: CommandSummary,
}

pub fn run(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    let dir = output_dir(cfg)?;
    let prep = prepare(cfg)?;
    let schemes = cfg.schemes()?;
    let lrs = cfg.lrs()?;
    let train = &prep.train;
    let model = &prep.model;
    let steps = cfg.run.run_config(0).total_steps(train.n());
    let log_every = cfg.run.log_every.max(1);

    let optimum = reference_minimizer(
        model,
        train,
        cfg.run.projection_radius,
        &ParameterVector::zeros(model.param_dim()),
        10 * steps,
    )?;
    let optimum_risk = model.empirical_risk(&optimum, train.samples())?;

    let mut summary = CommandSummary::default();
    let mut outcomes = Vec::new();
    let mut ranks = csv_writer(&dir.join("convergence_summary.csv"))?;
    ranks.write_record(["lr", "seed", "scheme", "k", "d", "final_suboptimality", "rank"])?;

    for lr_spec in lrs {
        let lr = lr_spec.build(steps)?;
        let label = lr_spec.label();
        let runs = per_seed(cfg, |seed| {
            let rc = cfg.run.run_config(seed);
            let mut rows = Vec::new();
            let mut failure = None;
            Trainer::new(model, train, &lr, &rc).run_observed(&schemes, |ev| {
                if failure.is_some() || (ev.step % log_every != 0 && ev.step != steps) {
                    return;
                }
                for (s, avg) in schemes.iter().zip(ev.averages) {
                    match model.empirical_risk(avg, train.samples()) {
                        Ok(risk) => rows.push(row(s, ev.step, seed, risk, optimum_risk)),
                        Err(e) => failure = Some(e),
                    }
                }
            })?;
            if let Some(e) = failure {
                return Err(e.into());
            }
            Ok(rows)
        })?;

        let path = dir.join(format!("convergence_{}.csv", file_label(&label)));
        let mut w = csv_writer(&path)?;
        for rows in &runs {
            for r in rows {
                w.serialize(r)?;
            }
        }
        w.flush()?;
        summary.files.push(path);

        let mut finals = Vec::new();
        for (seed, rows) in cfg.seeds.iter().zip(&runs) {
            let last: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.step == steps).collect();
            let mut order: Vec<usize> = (0..last.len()).collect();
            order.sort_by(|&a, &b| last[a].suboptimality.total_cmp(&last[b].suboptimality));
            let mut rank = vec![0; last.len()];
            for (pos, &i) in order.iter().enumerate() {
                rank[i] = pos + 1;
            }
            for (r, rk) in last.iter().zip(&rank) {
                ranks.write_record([
                    label.clone(),
                    seed.to_string(),
                    r.scheme.clone(),
                    r.k.to_string(),
                    r.d.to_string(),
                    r.suboptimality.to_string(),
                    rk.to_string(),
                ])?;
            }
            finals.push(SeedFinals {
                seed: *seed,
                suboptimality: last.iter().map(|r| (r.scheme.clone(), r.suboptimality)).collect(),
            });
        }

        let per: Vec<BTreeMap<String, f64>> =
            finals.iter().map(|f| f.suboptimality.clone()).collect();
        let mut outcomes_lr = Vec::new();
        for chain in &cfg.checks.suboptimality {
            outcomes_lr.push(evaluate_chain(
                &format!("suboptimality[{label}]"),
                chain,
                &per,
                cfg.checks.majority,
            )?);
        }
        summary.absorb_checks(outcomes_lr);
        outcomes.push(LrOutcome {
            lr: label,
            steps,
            finals,
        });
    }
    ranks.flush()?;
    summary.files.push(dir.join("convergence_summary.csv"));

    if !summary.checks.is_empty() {
        let path = dir.join("convergence_checks.csv");
        crate::checks::write_outcomes(&path, &summary.checks)?;
        summary.files.push(path);
    }
    #[derive(Serialize)]
    struct Details {
        steps: usize,
        optimum_risk: f64,
        optimum: Vec<f64>,
    }
    summary.files.push(write_manifest(
        &dir,
        "convergence",
        cfg,
        Details {
            steps,
            optimum_risk,
            optimum: optimum.as_slice().to_vec(),
        },
    )?);
    if outcomes.is_empty() {
        bail!("no learning rates configured");
    }
    Ok(ConvergenceReport {
        optimum,
        optimum_risk,
        outcomes,
        summary,
    })
}

fn row(s: &AveragingScheme, step: usize, seed: u64, risk: f64, optimum: f64) -> ConvergenceRow {
    ConvergenceRow {
        step,
        scheme: s.label(),
        k: s.k_at(step),
        d: s.d(),
        seed,
        suboptimality: risk - optimum,
        train_loss: risk,
    }
}
