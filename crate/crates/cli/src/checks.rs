//! Majority-over-seeds ordering checks.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, Result};
use serde::Serialize;

/// Outcome of one ordering chain across seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainOutcome {
    pub metric: String,
    pub chain: Vec<String>,
    pub holds: Vec<bool>,
    pub majority: f64,
    pub passed: bool,
}

impl ChainOutcome {
    pub fn seeds_holding(&self) -> usize {
        self.holds.iter().filter(|h| **h).count()
    }

    pub fn describe(&self) -> String {
        format!(
            "{}: {} held in {}/{} seeds",
            self.metric,
            self.chain.join(" >= "),
            self.seeds_holding(),
            self.holds.len()
        )
    }
}

/// `values[0] >= values[1] >= ...`.
pub fn non_increasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] >= w[1])
}

/// Checks `chain` (largest first) against per-seed metric values keyed by label.
pub fn evaluate_chain(
    metric: &str,
    chain: &[String],
    per_seed: &[BTreeMap<String, f64>],
    majority: f64,
) -> Result<ChainOutcome> {
    let mut holds = Vec::with_capacity(per_seed.len());
    for values in per_seed {
        let seq = chain
            .iter()
            .map(|label| {
                values.get(label).copied().ok_or_else(|| {
                    let known: Vec<&str> = values.keys().map(String::as_str).collect();
                    anyhow!("{metric} check names unknown label '{label}' (known: {known:?})")
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        holds.push(non_increasing(&seq));
    }
    let fraction = holds.iter().filter(|h| **h).count() as f64 / holds.len().max(1) as f64;
    Ok(ChainOutcome {
        metric: metric.to_string(),
        chain: chain.to_vec(),
        passed: fraction >= majority,
        holds,
        majority,
    })
}

pub fn write_outcomes(path: &Path, outcomes: &[ChainOutcome]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "chain", "seeds_holding", "seeds", "majority", "passed"])?;
    for o in outcomes {
        w.write_record([
            o.metric.clone(),
            o.chain.join(" >= "),
            o.seeds_holding().to_string(),
            o.holds.len().to_string(),
            o.majority.to_string(),
            o.passed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn majority_rule() {
        let chain = vec!["sgd".to_string(), "swa".to_string()];
        let seeds: Vec<_> = [3.0, 2.0, 1.0, 0.5, 0.1]
            .iter()
            .map(|&swa| seed(&[("sgd", 1.0), ("swa", swa)]))
            .collect();
        let o = evaluate_chain("distance", &chain, &seeds, 0.8).unwrap();
        assert_eq!(o.holds, vec![false, false, true, true, true]);
        assert!(!o.passed);
        assert!(evaluate_chain("distance", &chain, &seeds, 0.6).unwrap().passed);
    }

    #[test]
    fn unknown_label_is_an_error() {
        let chain = vec!["fwa_k3".to_string()];
        assert!(evaluate_chain("x", &chain, &[seed(&[("sgd", 1.0)])], 0.8).is_err());
    }

    #[test]
    fn ties_count_as_ordered() {
        assert!(non_increasing(&[2.0, 2.0, 1.0]));
        assert!(!non_increasing(&[1.0, 2.0]));
    }
}
