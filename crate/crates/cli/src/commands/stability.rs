//! Twin-dataset stability sweep: per-epoch parameter distance and generalization error.

use std::collections::BTreeMap;

use anyhow::Result;
use fwa_core::stability::{run_stability_experiment, StabilityReport};
use serde::Serialize;

use super::{csv_writer, file_label, output_dir, per_seed, write_manifest, CommandSummary};
use crate::checks::evaluate_chain;
use crate::config::ExperimentConfig;
use crate::prepare::prepare;

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub epoch: usize,
    pub scheme: String,
    pub k: usize,
    pub d: usize,
    pub param_distance: f64,
    pub gen_error: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    pub seed: u64,
    /// Distance between the raw last iterates, for reference.
    pub iterate_distance: f64,
}

#[derive(Debug, Clone)]
pub struct SeedStability {
    pub seed: u64,
    pub first_touch: Option<usize>,
    pub reports: Vec<StabilityReport>,
}

impl SeedStability {
    pub fn final_distances(&self) -> BTreeMap<String, f64> {
        self.reports.iter().map(|r| (r.scheme.label(), r.final_distance())).collect()
    }

    pub fn final_gen_errors(&self) -> BTreeMap<String, f64> {
        self.reports.iter().map(|r| (r.scheme.label(), r.final_gen_error())).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LrStability {
    pub lr: String,
    pub seeds: Vec<SeedStability>,
}

#[derive(Debug, Clone)]
pub struct StabilityOutput {
    pub outcomes: Vec<LrStability>,
    pub summary: CommandSummary,
}

pub fn run(cfg: &ExperimentConfig) -> Result<StabilityOutput> {
    let dir = output_dir(cfg)?;
    let prep = prepare(cfg)?;
    let schemes = cfg.schemes()?;
    let lrs = cfg.lrs()?;
    // The twin datasets have one sample fewer than the training split.
    let steps = cfg.run.run_config(0).total_steps(prep.train.n() - 1);

    let mut summary = CommandSummary::default();
    let mut outcomes = Vec::new();
    let summary_path = dir.join("stability_summary.csv");
    let mut sw = csv_writer(&summary_path)?;
    sw.write_record(["lr", "seed", "scheme", "final_distance", "final_gen_error", "first_touch"])?;

    for lr_spec in lrs {
        let lr = lr_spec.build(steps)?;
        let label = lr_spec.label();
        let seeds = per_seed(cfg, |seed| {
            let rc = cfg.run.run_config(seed);
            let run =
                run_stability_experiment(&prep.model, &prep.train, &prep.test, &lr, &rc, &schemes)?;
            Ok(SeedStability {
                seed,
                first_touch: run.first_touch,
                reports: run.reports,
            })
        })?;

        let path = dir.join(format!("stability_{}.csv", file_label(&label)));
        let mut w = csv_writer(&path)?;
        for s in &seeds {
            for r in &s.reports {
                for e in 0..r.parameter_distance.len() {
                    w.serialize(StabilityRow {
                        epoch: e + 1,
                        scheme: r.scheme.label(),
                        k: r.scheme.k_at(steps),
                        d: r.scheme.d(),
                        param_distance: r.parameter_distance[e],
                        gen_error: r.generalization_error[e],
                        train_loss: r.train_error[e],
                        test_loss: r.test_error[e],
                        seed: s.seed,
                        iterate_distance: r.iterate_distance[e],
                    })?;
                }
                sw.write_record([
                    label.clone(),
                    s.seed.to_string(),
                    r.scheme.label(),
                    r.final_distance().to_string(),
                    r.final_gen_error().to_string(),
                    s.first_touch.map(|t| t.to_string()).unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;
        summary.files.push(path);

        let dist: Vec<_> = seeds.iter().map(SeedStability::final_distances).collect();
        let gen: Vec<_> = seeds.iter().map(SeedStability::final_gen_errors).collect();
        let mut found = Vec::new();
        for chain in &cfg.checks.distance {
            found.push(evaluate_chain(
                &format!("distance[{label}]"),
                chain,
                &dist,
                cfg.checks.majority,
            )?);
        }
        for chain in &cfg.checks.gen_error {
            found.push(evaluate_chain(
                &format!("gen_error[{label}]"),
                chain,
                &gen,
                cfg.checks.majority,
            )?);
        }
        summary.absorb_checks(found);
        outcomes.push(LrStability { lr: label, seeds });
    }
    sw.flush()?;
    summary.files.push(summary_path);

    // Compare learning rates scheme by scheme.
    let mut by_lr = Vec::new();
    for chain in &cfg.checks.distance_by_lr {
        for scheme in &schemes {
            let label = scheme.label();
            let per: Vec<BTreeMap<String, f64>> = (0..cfg.seeds.len())
                .map(|i| {
                    outcomes
                        .iter()
                        .map(|o| (o.lr.clone(), o.seeds[i].final_distances()[&label]))
                        .collect()
                })
                .collect();
            by_lr.push(evaluate_chain(
                &format!("distance_by_lr[{label}]"),
                chain,
                &per,
                cfg.checks.majority,
            )?);
        }
    }
    summary.absorb_checks(by_lr);

    if !summary.checks.is_empty() {
        let path = dir.join("stability_checks.csv");
        crate::checks::write_outcomes(&path, &summary.checks)?;
        summary.files.push(path);
    }
    #[derive(Serialize)]
    struct Details {
        steps: usize,
        train_size: usize,
        test_size: usize,
    }
    summary.files.push(write_manifest(
        &dir,
        "stability",
        cfg,
        Details {
            steps,
            train_size: prep.train.n(),
            test_size: prep.test.n(),
        },
    )?);
    Ok(StabilityOutput { outcomes, summary })
}
