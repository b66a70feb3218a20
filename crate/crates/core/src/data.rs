//! Datasets: CSV ingestion, synthetic generation, splitting and twin construction.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::model::Sample;
use crate::rng::{stream, Stream};

/// Ordered, non-empty list of samples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    feature_names: Vec<String>,
    target_name: String,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let dim = samples
            .first()
            .ok_or_else(|| Error::contract("dataset must contain at least one sample"))?
            .dim();
        if let Some(i) = samples.iter().position(|s| s.dim() != dim) {
            return Err(Error::contract(format!(
                "sample {i} has {} features, expected {dim}",
                samples[i].dim()
            )));
        }
        Ok(Self {
            samples,
            feature_names: (0..dim).map(|i| format!("x{i}")).collect(),
            target_name: "y".to_string(),
        })
    }

    pub fn with_names(mut self, feature_names: Vec<String>, target_name: String) -> Result<Self> {
        if feature_names.len() != self.feature_dim() {
            return Err(Error::contract("feature name count does not match dimension"));
        }
        self.feature_names = feature_names;
        self.target_name = target_name;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples[0].dim()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    /// Divides each feature row by its l1 norm. Zero rows are left unchanged.
    pub fn l1_normalized(&self) -> Self {
        let mut out = self.clone();
        for s in &mut out.samples {
            l1_normalize_row(&mut s.features);
        }
        out
    }

    /// Seeded shuffle split into `(train, test)`; both parts must be non-empty.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::Config(format!(
                "test fraction must lie in [0, 1), got {test_fraction}"
            )));
        }
        let n_test = (self.n() as f64 * test_fraction).round() as usize;
        if n_test == 0 || n_test >= self.n() {
            return Err(Error::contract(format!(
                "split of {} samples with fraction {test_fraction} leaves an empty part",
                self.n()
            )));
        }
        let mut idx: Vec<usize> = (0..self.n()).collect();
        idx.shuffle(&mut stream(seed, Stream::Split));
        let pick = |ids: &[usize]| Self {
            samples: ids.iter().map(|&i| self.samples[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
        };
        Ok((pick(&idx[n_test..]), pick(&idx[..n_test])))
    }

    /// Reads a headed numeric CSV. `target_column` names the target; every other column
    /// is a feature.
    pub fn load_csv(path: impl AsRef<Path>, target_column: &str, l1_normalize: bool) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path.as_ref()).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Config(format!("cannot open CSV: {other:?}")),
        })?;
        let headers = reader.headers()?.clone();
        let target_idx = headers
            .iter()
            .position(|h| h.trim() == target_column)
            .ok_or_else(|| {
                Error::Config(format!("target column '{target_column}' not found in CSV header"))
            })?;
        let feature_names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target_idx)
            .map(|(_, h)| h.trim().to_string())
            .collect();
        if feature_names.is_empty() {
            return Err(Error::Config("CSV has no feature columns".into()));
        }

        let mut samples = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            // Row numbers are 1-based and count the header.
            let row = row + 2;
            let mut features = Vec::with_capacity(feature_names.len());
            let mut target = f64::NAN;
            for (col, cell) in record.iter().enumerate() {
                let value: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    row,
                    column: headers.get(col).unwrap_or("?").to_string(),
                    detail: format!("'{cell}' is not a number"),
                })?;
                if col == target_idx {
                    target = value;
                } else {
                    features.push(value);
                }
            }
            if features.len() != feature_names.len() || target.is_nan() {
                return Err(Error::Parse {
                    row,
                    column: String::new(),
                    detail: format!("expected {} cells, found {}", headers.len(), record.len()),
                });
            }
            if l1_normalize {
                l1_normalize_row(&mut features);
            }
            samples.push(Sample::new(features, target).map_err(|e| Error::Parse {
                row,
                column: String::new(),
                detail: e.to_string(),
            })?);
        }
        if samples.is_empty() {
            return Err(Error::Config("CSV contains no data rows".into()));
        }
        Self::new(samples)?.with_names(feature_names, target_column.to_string())
    }

    /// Writes the dataset in the same CSV layout `load_csv` accepts (target last).
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.target_name);
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
            row.push(s.target.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn l1_normalize_row(row: &mut [f64]) {
    let norm: f64 = row.iter().map(|v| v.abs()).sum();
    if norm > 0.0 {
        row.iter_mut().for_each(|v| *v /= norm);
    }
}

/// A synthetic linear-regression dataset and the ground truth that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRegression {
    pub dataset: Dataset,
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Features uniform on `[-1, 1]^dim`, target `⟨w*, x⟩ + b* + N(0, noise_std²)` with
/// `w*, b*` standard normal. Deterministic in `seed`.
pub fn gen_synthetic_regression(
    dim: usize,
    n: usize,
    noise_std: f64,
    seed: u64,
) -> Result<SyntheticRegression> {
    if dim == 0 || n < 2 {
        return Err(Error::contract(format!(
            "synthetic regression needs dim >= 1 and n >= 2 (got dim={dim}, n={n})"
        )));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::contract("noise_std must be finite and non-negative"));
    }
    let mut rng = stream(seed, Stream::Synthetic);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let unit = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let weights: Vec<f64> = (0..dim).map(|_| std_normal.sample(&mut rng)).collect();
    let bias = std_normal.sample(&mut rng);
    let samples = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| unit.sample(&mut rng)).collect();
            let clean: f64 = x.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>() + bias;
            let y = clean + noise_std * std_normal.sample(&mut rng);
            Sample::new(x, y)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticRegression {
        dataset: Dataset::new(samples)?,
        weights,
        bias,
    })
}

/// Two equal-size datasets that differ in exactly one position.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinPair {
    pub s: Dataset,
    pub s_prime: Dataset,
    /// Index in `s`/`s_prime` where the two datasets differ.
    pub differing_index: usize,
    /// Index in the base dataset of the sample that was held out of `s`.
    pub removed_index: usize,
}

/// Removes one random sample from `base` to form `S`, then builds `S'` by overwriting a
/// random position of `S` with the removed sample. The replacement position is redrawn
/// until the overwritten sample differs from the removed one.
pub fn make_twin(base: &Dataset, seed: u64) -> Result<TwinPair> {
    if base.n() < 2 {
        return Err(Error::contract("twin construction needs at least two samples"));
    }
    let mut rng = stream(seed, Stream::Twin);
    let removed_index = rng.random_range(0..base.n());
    let removed = base.samples[removed_index].clone();
    let mut s = base.clone();
    s.samples.remove(removed_index);

    if s.samples.iter().all(|z| *z == removed) {
        return Err(Error::contract(
            "every remaining sample equals the removed one; no differing twin exists",
        ));
    }
    let differing_index = loop {
        let j = rng.random_range(0..s.n());
        if s.samples[j] != removed {
            break j;
        }
    };
    let mut s_prime = s.clone();
    s_prime.samples[differing_index] = removed;
    Ok(TwinPair {
        s,
        s_prime,
        differing_index,
        removed_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn ds(rows: &[(&[f64], f64)]) -> Dataset {
        Dataset::new(rows.iter().map(|(x, y)| Sample::new(x.to_vec(), *y).unwrap()).collect()).unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_rows_are_l1_normalized() {
        let f = write_tmp("a,b,c,y\n1,-1,2,5\n0,0,0,1\n3,1,0,2\n");
        let d = Dataset::load_csv(f.path(), "y", true).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.samples()[0].features, vec![0.25, -0.25, 0.5]);
        assert_eq!(d.samples()[1].features, vec![0.0, 0.0, 0.0]);
        assert_eq!(d.samples()[2].target, 2.0);
        assert_eq!(d.feature_names(), &["a", "b", "c"]);
    }

    #[test]
    fn csv_target_may_be_any_column() {
        let f = write_tmp("y,a\n1,2\n3,4\n");
        let d = Dataset::load_csv(f.path(), "y", false).unwrap();
        assert_eq!(d.samples()[1].features, vec![4.0]);
        assert_eq!(d.samples()[1].target, 3.0);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            Dataset::load_csv("/definitely/not/here.csv", "y", false),
            Err(Error::Io(_))
        ));
        let f = write_tmp("a,y\n1,2\n3,oops\n");
        match Dataset::load_csv(f.path(), "y", false) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "y");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let f = write_tmp("a,b\n1,2\n");
        assert!(matches!(Dataset::load_csv(f.path(), "y", false), Err(Error::Config(_))));
    }

    #[test]
    fn csv_round_trip() {
        let d = gen_synthetic_regression(3, 10, 0.1, 4).unwrap().dataset;
        let f = tempfile::NamedTempFile::new().unwrap();
        d.write_csv(f.path()).unwrap();
        assert_eq!(Dataset::load_csv(f.path(), "y", false).unwrap(), d);
    }

    #[test]
    fn l1_normalization_is_idempotent() {
        let d = gen_synthetic_regression(5, 50, 0.1, 9).unwrap().dataset;
        let once = d.l1_normalized();
        let twice = once.l1_normalized();
        for (a, b) in once.samples().iter().zip(twice.samples()) {
            for (x, y) in a.features.iter().zip(&b.features) {
                assert!((x - y).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_noiseless_recovers_truth() {
        let a = gen_synthetic_regression(4, 30, 0.0, 17).unwrap();
        let b = gen_synthetic_regression(4, 30, 0.0, 17).unwrap();
        assert_eq!(a, b);
        for s in a.dataset.samples() {
            let pred: f64 = s.features.iter().zip(&a.weights).map(|(x, w)| x * w).sum::<f64>() + a.bias;
            assert!((pred - s.target).abs() < 1e-12);
        }
        assert_ne!(a, gen_synthetic_regression(4, 30, 0.0, 18).unwrap());
    }

    #[test]
    fn synthetic_target_variance_is_plausible() {
        // Var(y) = Σ w_i² Var(x_i) + σ² with Var(U[-1,1]) = 1/3.
        let g = gen_synthetic_regression(10, 1000, 0.1, 21).unwrap();
        let expected = g.weights.iter().map(|w| w * w / 3.0).sum::<f64>() + 0.01;
        let ys: Vec<f64> = g.dataset.samples().iter().map(|s| s.target).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (ys.len() - 1) as f64;
        assert!(var < 3.0 * expected && var > expected / 3.0, "var {var}, expected {expected}");
    }

    #[test]
    fn synthetic_rejects_bad_shapes() {
        assert!(gen_synthetic_regression(0, 10, 0.1, 1).is_err());
        assert!(gen_synthetic_regression(2, 1, 0.1, 1).is_err());
    }

    #[test]
    fn split_partitions_samples() {
        let d = gen_synthetic_regression(2, 100, 0.1, 2).unwrap().dataset;
        let (train, test) = d.split(0.2, 5).unwrap();
        assert_eq!((train.n(), test.n()), (80, 20));
        let mut all: Vec<_> = train.samples().iter().chain(test.samples()).map(|s| s.target.to_bits()).collect();
        let mut orig: Vec<_> = d.samples().iter().map(|s| s.target.to_bits()).collect();
        all.sort_unstable();
        orig.sort_unstable();
        assert_eq!(all, orig);
        assert_eq!(d.split(0.2, 5).unwrap(), (train, test));
    }

    #[test]
    fn twin_differs_at_exactly_one_index() {
        let base = gen_synthetic_regression(3, 40, 0.5, 8).unwrap().dataset;
        for seed in 0..20 {
            let t = make_twin(&base, seed).unwrap();
            assert_eq!(t.s.n(), base.n() - 1);
            assert_eq!(t.s_prime.n(), t.s.n());
            let diffs: Vec<usize> = (0..t.s.n()).filter(|&i| t.s.samples()[i] != t.s_prime.samples()[i]).collect();
            assert_eq!(diffs, vec![t.differing_index]);
            assert_eq!(t.s_prime.samples()[t.differing_index], base.samples()[t.removed_index]);
            assert_eq!(make_twin(&base, seed).unwrap(), t);
        }
    }

    #[test]
    fn twin_conserves_the_multiset() {
        let base = gen_synthetic_regression(2, 25, 0.5, 3).unwrap().dataset;
        let t = make_twin(&base, 7).unwrap();
        let key = |s: &Sample| (s.features.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), s.target.to_bits());
        let mut union: Vec<_> = t.s.samples().iter().map(key).collect();
        union.push(key(&base.samples()[t.removed_index]));
        let mut orig: Vec<_> = base.samples().iter().map(key).collect();
        union.sort();
        orig.sort();
        assert_eq!(union, orig);
    }

    #[test]
    fn twin_avoids_reinserting_an_identical_sample() {
        // Two identical samples plus one distinct: whichever is removed, S' must differ.
        let base = ds(&[(&[1.0], 1.0), (&[1.0], 1.0), (&[2.0], 0.0)]);
        for seed in 0..30 {
            let t = make_twin(&base, seed).unwrap();
            assert_ne!(t.s, t.s_prime);
        }
        let same = ds(&[(&[1.0], 1.0), (&[1.0], 1.0)]);
        assert!(make_twin(&same, 0).is_err());
        assert!(make_twin(&ds(&[(&[1.0], 1.0)]), 0).is_err());
    }
}
