//! Plain training runs: per-step logs and the final average of every scheme.

use anyhow::Result;
use fwa_core::optimizer::Trainer;
use fwa_core::stability::train_test_errors;
use serde::Serialize;

use super::{csv_writer, file_label, output_dir, per_seed, write_manifest, CommandSummary};
use crate::config::ExperimentConfig;
use crate::prepare::prepare;

pub fn run(cfg: &ExperimentConfig) -> Result<CommandSummary> {
    let dir = output_dir(cfg)?;
    let prep = prepare(cfg)?;
    let schemes = cfg.schemes()?;
    let steps = cfg.run.run_config(0).total_steps(prep.train.n());
    let mut summary = CommandSummary::default();

    let finals_path = dir.join("final_averages.csv");
    let mut fw = csv_writer(&finals_path)?;
    let mut header = vec!["lr", "seed", "scheme", "train_loss", "test_loss"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend((0..prep.model.param_dim()).map(|j| format!("w{j}")));
    fw.write_record(&header)?;

    for lr_spec in cfg.lrs()? {
        let lr = lr_spec.build(steps)?;
        let label = lr_spec.label();
        let runs = per_seed(cfg, |seed| {
            let rc = cfg.run.run_config(seed);
            Ok(Trainer::new(&prep.model, &prep.train, &lr, &rc).run(&schemes)?)
        })?;
        for (seed, out) in cfg.seeds.iter().zip(&runs) {
            let path = dir.join(format!("trajectory_{}_seed{seed}.csv", file_label(&label)));
            out.trajectory.write_log_csv(&path)?;
            summary.files.push(path);
            for (s, w) in schemes.iter().zip(&out.final_averages) {
                let (tr, te) = train_test_errors(&prep.model, w, &prep.train, &prep.test)?;
                let mut row = vec![label.clone(), seed.to_string(), s.label(), tr.to_string(), te.to_string()];
                row.extend(w.as_slice().iter().map(|v| v.to_string()));
                fw.write_record(&row)?;
            }
        }
    }
    fw.flush()?;
    summary.files.push(finals_path);

    #[derive(Serialize)]
    struct Details {
        steps: usize,
    }
    summary.files.push(write_manifest(&dir, "train", cfg, Details { steps })?);
    Ok(summary)
}
