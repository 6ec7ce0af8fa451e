//! Datasets: CSV ingestion, seeded splitting, standardization and a
//! latent-score synthetic generator.

use std::io::Write;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoralError, Result};
use crate::ordinal::{RankIndex, RankSpec};

/// A single labelled example borrowed from a [`Dataset`].
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub x: &'a [f64],
    pub rank: RankIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Row-major `N x d`.
    features: Vec<f64>,
    dim: usize,
    labels: Vec<RankIndex>,
    spec: RankSpec,
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<RankIndex>,
        spec: RankSpec,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(CoralError::Domain("dataset has no examples".into()));
        }
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(CoralError::Dimension {
                what: "feature matrix",
                expected: dim * labels.len(),
                actual: features.len(),
            });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(CoralError::Domain(format!(
                "non-finite feature in row {}",
                i / dim + 1
            )));
        }
        if let Some(q) = labels.iter().find(|q| q.get() > spec.num_ranks()) {
            return Err(CoralError::Domain(format!(
                "label {q} outside 1..={}",
                spec.num_ranks()
            )));
        }
        Ok(Self {
            features,
            dim,
            labels,
            spec,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> &RankSpec {
        &self.spec
    }

    pub fn labels(&self) -> &[RankIndex] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn example(&self, i: usize) -> Example<'_> {
        Example {
            x: self.row(i),
            rank: self.labels[i],
        }
    }

    pub fn examples(&self) -> Vec<Example<'_>> {
        (0..self.len()).map(|i| self.example(i)).collect()
    }

    pub fn select(&self, indices: &[usize], provenance: impl Into<String>) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(features, self.dim, labels, self.spec.clone(), provenance)
    }

    /// Number of examples per rank, index `q - 1`.
    pub fn rank_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.spec.num_ranks()];
        for q in &self.labels {
            counts[q.zero_based()] += 1;
        }
        counts
    }

    /// Writes the `d` feature columns followed by the integer rank index.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for i in 0..self.len() {
            for v in self.row(i) {
                write!(out, "{v},")?;
            }
            writeln!(out, "{}", self.labels[i])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub num_ranks: usize,
    pub has_header: bool,
}

/// Loads `d` feature columns plus a trailing 1-based integer rank column.
pub fn load_csv(path: &Path, schema: CsvSchema) -> Result<Dataset> {
    let spec = RankSpec::numbered(schema.num_ranks)?;
    let parse_err = |line: usize, message: String| CoralError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => CoralError::Io(io),
            other => parse_err(0, format!("{other:?}")),
        })?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() < 2 {
            return Err(parse_err(line, "need at least one feature and a label".into()));
        }
        let width = record.len() - 1;
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(parse_err(
                    line,
                    format!("ragged row: {} columns, expected {}", record.len(), d + 1),
                ))
            }
            _ => {}
        }
        for (col, cell) in record.iter().take(width).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("column {}: cannot parse {cell:?}", col + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {}: non-finite value", col + 1)));
            }
            features.push(v);
        }
        let cell = &record[width];
        let q: usize = cell
            .parse()
            .map_err(|_| parse_err(line, format!("column {}: bad label {cell:?}", width + 1)))?;
        let q = spec
            .rank(q)
            .map_err(|_| parse_err(line, format!("label {q} outside 1..={}", schema.num_ranks)))?;
        labels.push(q);
    }
    let Some(dim) = dim else {
        return Err(parse_err(0, "file contains no examples".into()));
    };
    Dataset::new(features, dim, labels, spec, path.display().to_string())
}

/// Train/validation/test fractions and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitPlan {
    pub fn new(train: f64, validation: f64, test: f64, seed: u64) -> Result<Self> {
        let plan = Self {
            train,
            validation,
            test,
            seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(CoralError::Config(format!(
                "split fractions must be positive, got {parts:?}"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CoralError::Config(format!(
                "split fractions must sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// `(n_train, n_validation, n_test)`; train and validation are rounded,
    /// test takes the remainder.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let n_train = (n as f64 * self.train).round() as usize;
        let n_val = (n as f64 * self.validation).round() as usize;
        let n_test = n.saturating_sub(n_train + n_val);
        if n_train == 0 {
            return Err(CoralError::EmptySplit("train"));
        }
        if n_val == 0 {
            return Err(CoralError::EmptySplit("validation"));
        }
        if n_test == 0 {
            return Err(CoralError::EmptySplit("test"));
        }
        Ok((n_train, n_val, n_test))
    }
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Seeded permutation followed by contiguous slicing.
pub fn split(dataset: &Dataset, plan: &SplitPlan) -> Result<Splits> {
    let (n_train, n_val, _) = plan.sizes(dataset.len())?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(plan.seed));
    let name = |part: &str| format!("{} [{part}]", dataset.provenance);
    Ok(Splits {
        train: dataset.select(&order[..n_train], name("train"))?,
        validation: dataset.select(&order[n_train..n_train + n_val], name("validation"))?,
        test: dataset.select(&order[n_train + n_val..], name("test"))?,
    })
}

/// Per-feature affine standardization fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero marks a constant feature.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &Dataset) -> Self {
        let n = train.len() as f64;
        let d = train.dim();
        let mut mean = vec![0.0; d];
        for i in 0..train.len() {
            for (m, v) in mean.iter_mut().zip(train.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..train.len() {
            for ((s, v), m) in var.iter_mut().zip(train.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
        for (j, s) in scale.iter().enumerate() {
            if *s == 0.0 {
                warn!("feature {} is constant on the training split; mapping it to 0", j + 1);
            }
        }
        Self { mean, scale }
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| if *s == 0.0 { 0.0 } else { (v - m) / s })
            .collect()
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.mean.len() {
            return Err(CoralError::Dimension {
                what: "standardizer features",
                expected: self.mean.len(),
                actual: data.dim(),
            });
        }
        let mut features = Vec::with_capacity(data.len() * data.dim());
        for i in 0..data.len() {
            features.extend(self.transform_row(data.row(i)));
        }
        Dataset::new(
            features,
            data.dim(),
            data.labels().to_vec(),
            data.spec().clone(),
            data.provenance.clone(),
        )
    }
}

/// Fits on `train` only and applies the transform to every split.
pub fn normalize(splits: &Splits) -> Result<(Splits, Standardizer)> {
    let st = Standardizer::fit(&splits.train);
    Ok((
        Splits {
            train: st.apply(&splits.train)?,
            validation: st.apply(&splits.validation)?,
            test: st.apply(&splits.test)?,
        },
        st,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub seed: u64,
    pub n: usize,
    pub dim: usize,
    pub num_ranks: usize,
    pub noise_sd: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            seed: 0,
            n: 2000,
            dim: 4,
            num_ranks: 6,
            noise_sd: 0.1,
        }
    }
}

/// A generated dataset together with its latent scores and thresholds.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub scores: Vec<f64>,
    pub thresholds: Vec<f64>,
}

const SYNTHETIC_RETRIES: usize = 100;

/// Latent-score ordinal data: `x ~ U[-1, 1]^d`, `t = <w, x> + N(0, sd)` with
/// `w = (1, ..., 1) / sqrt(d)`, and ranks from `K-1` equal-width thresholds
/// over the observed range of `t`. Redraws until every rank is present,
/// which also makes every binary task two-class.
pub fn generate_synthetic_detailed(params: &SyntheticParams) -> Result<Synthetic> {
    let SyntheticParams {
        seed,
        n,
        dim,
        num_ranks,
        noise_sd,
    } = *params;
    let spec = RankSpec::numbered(num_ranks)?;
    if dim == 0 {
        return Err(CoralError::Domain("feature dimension must be positive".into()));
    }
    if n < 10 * num_ranks {
        return Err(CoralError::Domain(format!(
            "need at least 10*K = {} examples, got {n}",
            10 * num_ranks
        )));
    }
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(CoralError::Domain(format!("noise sd {noise_sd} must be >= 0")));
    }
    let noise = Normal::new(0.0, noise_sd).map_err(|e| CoralError::Domain(e.to_string()))?;
    let w = 1.0 / (dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..SYNTHETIC_RETRIES {
        let features: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let scores: Vec<f64> = features
            .chunks_exact(dim)
            .map(|x| w * x.iter().sum::<f64>() + noise.sample(&mut rng))
            .collect();
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / num_ranks as f64;
        let thresholds: Vec<f64> = (1..num_ranks).map(|j| lo + j as f64 * width).collect();
        let labels: Vec<RankIndex> = scores
            .iter()
            .map(|t| RankIndex::from_raw(1 + thresholds.iter().filter(|&&c| *t > c).count()))
            .collect();
        let dataset = Dataset::new(
            features,
            dim,
            labels,
            spec.clone(),
            format!("synthetic(seed={seed}, n={n}, d={dim}, K={num_ranks}, noise_sd={noise_sd})"),
        )?;
        if dataset.rank_counts().iter().all(|&c| c > 0) {
            return Ok(Synthetic {
                dataset,
                scores,
                thresholds,
            });
        }
    }
    Err(CoralError::RetriesExhausted(SYNTHETIC_RETRIES))
}

pub fn generate_synthetic(params: &SyntheticParams) -> Result<Dataset> {
    Ok(generate_synthetic_detailed(params)?.dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordinal::extend_label;

    fn tmp_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn schema(k: usize) -> CsvSchema {
        CsvSchema {
            num_ranks: k,
            has_header: false,
        }
    }

    #[test]
    fn csv_three_lines() {
        let f = tmp_csv("1.0,2.0,1\n0.5,0.1,3\n2.2,0.9,2\n");
        let d = load_csv(f.path(), schema(3)).unwrap();
        assert_eq!((d.len(), d.dim()), (3, 2));
        assert_eq!(d.row(1), &[0.5, 0.1]);
        assert_eq!(d.labels()[2].get(), 2);
    }

    #[test]
    fn csv_header_is_skipped() {
        let f = tmp_csv("a,b,rank\n1.0,2.0,1\n0.5,0.1,2\n");
        let d = load_csv(
            f.path(),
            CsvSchema {
                num_ranks: 2,
                has_header: true,
            },
        )
        .unwrap();
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn csv_label_zero_names_line() {
        let f = tmp_csv("1.0,2.0,1\n0.5,0.1,0\n");
        let err = load_csv(f.path(), schema(3)).unwrap_err();
        match err {
            CoralError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn csv_errors() {
        let f = tmp_csv("");
        assert!(load_csv(f.path(), schema(3)).is_err());
        let f = tmp_csv("1.0,2.0,1\n0.5,2\n");
        let msg = load_csv(f.path(), schema(3)).unwrap_err().to_string();
        assert!(msg.contains("ragged") && msg.contains(":2:"), "{msg}");
        let f = tmp_csv("1.0,x,1\n");
        let msg = load_csv(f.path(), schema(3)).unwrap_err().to_string();
        assert!(msg.contains("column 2"), "{msg}");
        assert!(load_csv(Path::new("/nonexistent/file.csv"), schema(3)).is_err());
    }

    #[test]
    fn csv_round_trip_through_export() {
        let d = generate_synthetic(&SyntheticParams {
            n: 60,
            ..Default::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let f = tmp_csv(std::str::from_utf8(&buf).unwrap());
        let back = load_csv(f.path(), schema(6)).unwrap();
        assert_eq!(back.labels(), d.labels());
        for i in 0..d.len() {
            assert_eq!(back.row(i), d.row(i));
        }
    }

    fn ten() -> Dataset {
        let spec = RankSpec::numbered(3).unwrap();
        let labels = (0..10).map(|i| spec.rank(1 + i % 3).unwrap()).collect();
        Dataset::new((0..10).map(f64::from).collect(), 1, labels, spec, "ten").unwrap()
    }

    #[test]
    fn split_sizes_and_partition() {
        let d = ten();
        let plan = SplitPlan::new(0.6, 0.2, 0.2, 0).unwrap();
        let s = split(&d, &plan).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (6, 2, 2));
        let mut all: Vec<f64> = [&s.train, &s.validation, &s.test]
            .iter()
            .flat_map(|p| (0..p.len()).map(|i| p.row(i)[0]).collect::<Vec<_>>())
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(all, (0..10).map(f64::from).collect::<Vec<_>>());
        let again = split(&d, &plan).unwrap();
        assert_eq!(again.train, s.train);
        assert_eq!(again.test, s.test);
    }

    #[test]
    fn split_rejects_empty_parts() {
        let spec = RankSpec::numbered(2).unwrap();
        let labels = vec![spec.rank(1).unwrap(); 3];
        let d = Dataset::new(vec![0.0; 3], 1, labels, spec, "three").unwrap();
        let plan = SplitPlan::new(0.8, 0.1, 0.1, 0).unwrap();
        assert!(matches!(split(&d, &plan), Err(CoralError::EmptySplit(_))));
        assert!(SplitPlan::new(0.5, 0.5, 0.5, 0).is_err());
        assert!(SplitPlan::new(1.0, 0.0, 0.0, 0).is_err());
    }

    #[test]
    fn standardizer_examples() {
        let spec = RankSpec::numbered(2).unwrap();
        let r = spec.rank(1).unwrap();
        let train = Dataset::new(vec![1.0, 5.0, 3.0, 5.0], 2, vec![r, r], spec.clone(), "t").unwrap();
        let st = Standardizer::fit(&train);
        let t = st.apply(&train).unwrap();
        assert_eq!(t.row(0), &[-1.0, 0.0]);
        assert_eq!(t.row(1), &[1.0, 0.0]);
        assert_eq!(st.transform_row(&[2.0, 9.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn normalization_uses_train_statistics_only() {
        let d = generate_synthetic(&SyntheticParams {
            n: 200,
            ..Default::default()
        })
        .unwrap();
        let s = split(&d, &SplitPlan::default()).unwrap();
        let (_, st) = normalize(&s).unwrap();
        assert_eq!(st, Standardizer::fit(&s.train));
        let (_, other) = normalize(&Splits {
            train: s.train.clone(),
            validation: s.test.clone(),
            test: s.validation.clone(),
        })
        .unwrap();
        assert_eq!(st, other);
    }

    #[test]
    fn synthetic_noiseless_is_threshold_separable() {
        let syn = generate_synthetic_detailed(&SyntheticParams {
            seed: 3,
            n: 300,
            dim: 2,
            num_ranks: 4,
            noise_sd: 0.0,
        })
        .unwrap();
        let w = 1.0 / 2f64.sqrt();
        for (i, t) in syn.scores.iter().enumerate() {
            let x = syn.dataset.row(i);
            assert!((w * (x[0] + x[1]) - t).abs() < 1e-12);
            let q = 1 + syn.thresholds.iter().filter(|&&c| *t > c).count();
            assert_eq!(q, syn.dataset.labels()[i].get());
        }
    }

    #[test]
    fn synthetic_benchmark_postconditions() {
        let p = SyntheticParams::default();
        let d = generate_synthetic(&p).unwrap();
        assert_eq!((d.len(), d.dim()), (2000, 4));
        assert!(d.rank_counts().iter().all(|&c| c > 0));
        for k in 0..5 {
            let ones = d
                .labels()
                .iter()
                .filter(|&&q| extend_label(q, d.spec()).unwrap().bits()[k] == 1)
                .count();
            assert!(ones > 0 && ones < d.len(), "task {} one-class", k + 1);
        }
        assert_eq!(generate_synthetic(&p).unwrap(), d);
    }

    #[test]
    fn synthetic_rejects_small_n() {
        let p = SyntheticParams {
            n: 59,
            ..Default::default()
        };
        assert!(generate_synthetic(&p).is_err());
    }
}
