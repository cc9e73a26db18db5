//! Data model: timestamped samples, CSV ingestion, standardization, and
//! time embeddings shared by every other module.
//!
//! Observation times are always normalized to `[0, 1]` before modeling; the
//! affine map back to raw timestamps is kept on the [`Dataset`].

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DriftError, Result};

/// One observation: a feature vector and its normalized observation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedSample {
    pub features: Vec<f64>,
    /// Normalized time in `[0, 1]`.
    pub time: f64,
}

/// An ordered collection of timed samples, sorted by time ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<TimedSample>,
    feature_names: Vec<String>,
    /// Raw timestamp that maps to normalized time 0.
    time_origin: f64,
    /// Positive scale: raw = origin + scale * normalized.
    time_scale: f64,
}

impl Dataset {
    /// Builds a dataset from raw (un-normalized) timestamps.
    ///
    /// Times are affinely mapped so the earliest sample lands at 0 and the
    /// latest at 1; samples are sorted by time (stable, so input order breaks
    /// ties).
    pub fn from_raw_times(
        features: Vec<Vec<f64>>,
        raw_times: Vec<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(DriftError::EmptyDataset);
        }
        if features.len() != raw_times.len() {
            return Err(DriftError::DimensionMismatch {
                expected: features.len(),
                got: raw_times.len(),
            });
        }
        let origin = raw_times.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = raw_times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let scale = max - origin;
        if !(scale > 0.0) {
            return Err(DriftError::ConstantTime);
        }
        let times: Vec<f64> = raw_times.iter().map(|&t| (t - origin) / scale).collect();
        Self::build(features, times, feature_names, origin, scale)
    }

    /// Builds a dataset whose times are already normalized to `[0, 1]`.
    pub fn from_normalized(
        features: Vec<Vec<f64>>,
        times: Vec<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        Self::build(features, times, feature_names, 0.0, 1.0)
    }

    fn build(
        features: Vec<Vec<f64>>,
        times: Vec<f64>,
        feature_names: Vec<String>,
        time_origin: f64,
        time_scale: f64,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(DriftError::EmptyDataset);
        }
        let width = feature_names.len();
        for (row, f) in features.iter().enumerate() {
            if f.len() != width {
                return Err(DriftError::DimensionMismatch {
                    expected: width,
                    got: f.len(),
                });
            }
            if let Some(col) = f.iter().position(|v| !v.is_finite()) {
                return Err(DriftError::NonNumericCell { row, col });
            }
        }
        for (row, &t) in times.iter().enumerate() {
            if !t.is_finite() || !(0.0..=1.0).contains(&t) {
                return Err(DriftError::NonNumericCell { row, col: width });
            }
        }
        let mut samples: Vec<TimedSample> = features
            .into_iter()
            .zip(times)
            .map(|(features, time)| TimedSample { features, time })
            .collect();
        samples.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite times"));
        Ok(Dataset {
            samples,
            feature_names,
            time_origin,
            time_scale,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn samples(&self) -> &[TimedSample] {
        &self.samples
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn time_origin(&self) -> f64 {
        self.time_origin
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    /// Copies out one feature column.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.features[j]).collect()
    }

    pub fn feature_rows(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.features.clone()).collect()
    }

    /// Per-feature population standard deviations (flagged-constant columns
    /// report their recorded deviation of 1).
    pub fn feature_stds(&self) -> Vec<f64> {
        StandardizationParams::fit(self).stds
    }

    /// Mean-centers and variance-scales every feature, returning the
    /// standardized dataset and the parameters used.
    pub fn standardize(&self) -> (Dataset, StandardizationParams) {
        let params = StandardizationParams::fit(self);
        (params.apply(self), params)
    }

    /// Splits into samples strictly before `change_point` and the rest.
    pub fn split_at(&self, change_point: f64) -> Result<(Dataset, Dataset)> {
        if !(change_point > 0.0 && change_point < 1.0) {
            return Err(DriftError::DomainError("change_point"));
        }
        let (before, after): (Vec<_>, Vec<_>) = self
            .samples
            .iter()
            .cloned()
            .partition(|s| s.time < change_point);
        if before.is_empty() || after.is_empty() {
            return Err(DriftError::DegenerateSplit { change_point });
        }
        let mk = |samples: Vec<TimedSample>| Dataset {
            samples,
            feature_names: self.feature_names.clone(),
            time_origin: self.time_origin,
            time_scale: self.time_scale,
        };
        Ok((mk(before), mk(after)))
    }

    /// Binary before/after labels for a change point.
    pub fn labels_at(&self, change_point: f64) -> Vec<u8> {
        self.samples
            .iter()
            .map(|s| u8::from(s.time >= change_point))
            .collect()
    }

    /// Dataset with the given rows (indices into `self`), keeping time metadata.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.is_empty() {
            return Err(DriftError::EmptyDataset);
        }
        let mut samples = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.samples.len() {
                return Err(DriftError::IndexOutOfRange {
                    index: i,
                    len: self.samples.len(),
                });
            }
            samples.push(self.samples[i].clone());
        }
        samples.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite times"));
        Ok(Dataset {
            samples,
            feature_names: self.feature_names.clone(),
            time_origin: self.time_origin,
            time_scale: self.time_scale,
        })
    }

    /// Replaces the sample list wholesale; used by generators that rewrite
    /// columns. Times and width must be unchanged.
    pub(crate) fn with_samples(&self, samples: Vec<TimedSample>) -> Dataset {
        debug_assert_eq!(samples.len(), self.samples.len());
        Dataset {
            samples,
            feature_names: self.feature_names.clone(),
            time_origin: self.time_origin,
            time_scale: self.time_scale,
        }
    }
}

/// Per-feature standardization parameters (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    /// Always positive; constant features store 1 and are flagged.
    pub stds: Vec<f64>,
    pub constant: Vec<bool>,
}

impl StandardizationParams {
    pub fn fit(ds: &Dataset) -> Self {
        let n = ds.len() as f64;
        let d = ds.n_features();
        let mut means = vec![0.0; d];
        for s in ds.samples() {
            for (m, &v) in means.iter_mut().zip(&s.features) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut vars = vec![0.0; d];
        for s in ds.samples() {
            for j in 0..d {
                let dv = s.features[j] - means[j];
                vars[j] += dv * dv;
            }
        }
        let mut stds = Vec::with_capacity(d);
        let mut constant = Vec::with_capacity(d);
        for v in vars {
            let sd = (v / n).sqrt();
            if sd > 0.0 {
                stds.push(sd);
                constant.push(false);
            } else {
                stds.push(1.0);
                constant.push(true);
            }
        }
        StandardizationParams {
            means,
            stds,
            constant,
        }
    }

    pub fn apply(&self, ds: &Dataset) -> Dataset {
        let samples = ds
            .samples()
            .iter()
            .map(|s| TimedSample {
                features: s
                    .features
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| (v - self.means[j]) / self.stds[j])
                    .collect(),
                time: s.time,
            })
            .collect();
        ds.with_samples(samples)
    }
}

/// Transformation of a timestamp into regression targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeEmbedding {
    /// Indicator `1[t >= change_point]`.
    Binary { change_point: f64 },
    /// Moments `t, t^2, ..., t^degree`.
    Polynomial { degree: usize },
    /// `sin(2*pi*k*t/period), cos(2*pi*k*t/period)` for `k = 1..=degree`,
    /// sin before cos per frequency. Period is in normalized time units.
    Fourier { degree: usize, period: f64 },
}

impl TimeEmbedding {
    pub fn output_len(&self) -> usize {
        match *self {
            TimeEmbedding::Binary { .. } => 1,
            TimeEmbedding::Polynomial { degree } => degree,
            TimeEmbedding::Fourier { degree, .. } => 2 * degree,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TimeEmbedding::Binary { change_point } => {
                if !(0.0..=1.0).contains(&change_point) {
                    return Err(DriftError::DomainError("change_point"));
                }
            }
            TimeEmbedding::Polynomial { degree } => {
                if degree == 0 {
                    return Err(DriftError::DomainError("degree"));
                }
            }
            TimeEmbedding::Fourier { degree, period } => {
                if degree == 0 {
                    return Err(DriftError::DomainError("degree"));
                }
                if !(period > 0.0) {
                    return Err(DriftError::DomainError("period"));
                }
            }
        }
        Ok(())
    }
}

/// Embeds a normalized time into its regression target vector.
pub fn embed_time(t: f64, emb: &TimeEmbedding) -> Vec<f64> {
    match *emb {
        TimeEmbedding::Binary { change_point } => {
            vec![if t >= change_point { 1.0 } else { 0.0 }]
        }
        TimeEmbedding::Polynomial { degree } => {
            let mut out = Vec::with_capacity(degree);
            let mut p = 1.0;
            for _ in 0..degree {
                p *= t;
                out.push(p);
            }
            out
        }
        TimeEmbedding::Fourier { degree, period } => {
            let mut out = Vec::with_capacity(2 * degree);
            for k in 1..=degree {
                let phase = 2.0 * PI * k as f64 * t / period;
                out.push(phase.sin());
                out.push(phase.cos());
            }
            out
        }
    }
}

/// Embedded targets for every sample of a dataset.
pub fn embed_dataset(ds: &Dataset, emb: &TimeEmbedding) -> Vec<Vec<f64>> {
    ds.samples()
        .iter()
        .map(|s| embed_time(s.time, emb))
        .collect()
}

/// Loads an RFC-4180 CSV with a header row. The `time_column` is removed from
/// the features and normalized to `[0, 1]`; all remaining columns must be
/// numeric.
pub fn load_csv(
    path: impl AsRef<Path>,
    time_column: &str,
    standardize: bool,
) -> Result<(Dataset, Option<StandardizationParams>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let time_idx = headers
        .iter()
        .position(|h| h == time_column)
        .ok_or_else(|| DriftError::MissingColumn(time_column.to_string()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != time_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut features = Vec::new();
    let mut raw_times = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let mut feats = Vec::with_capacity(feature_names.len());
        let mut time = None;
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field
                .trim()
                .parse()
                .map_err(|_| DriftError::NonNumericCell { row, col })?;
            if !value.is_finite() {
                return Err(DriftError::NonNumericCell { row, col });
            }
            if col == time_idx {
                time = Some(value);
            } else {
                feats.push(value);
            }
        }
        if feats.len() != feature_names.len() || time.is_none() {
            return Err(DriftError::NonNumericCell {
                row,
                col: record.len(),
            });
        }
        features.push(feats);
        raw_times.push(time.unwrap());
    }
    if features.is_empty() {
        return Err(DriftError::EmptyDataset);
    }

    let ds = Dataset::from_raw_times(features, raw_times, feature_names)?;
    if standardize {
        let (standardized, params) = ds.standardize();
        Ok((standardized, Some(params)))
    } else {
        Ok((ds, None))
    }
}

/// Writes a dataset back to CSV, de-normalizing times through the recorded
/// affine map so `write_csv . load_csv` reproduces the original values.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>, time_column: &str) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<&str> = ds.feature_names().iter().map(String::as_str).collect();
    header.push(time_column);
    writer.write_record(&header)?;
    for s in ds.samples() {
        let mut record: Vec<String> = s.features.iter().map(|v| format!("{v}")).collect();
        let raw_time = ds.time_origin() + ds.time_scale() * s.time;
        record.push(format!("{raw_time}"));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn raw_times_normalize_min_zero_max_one() {
        let ds = Dataset::from_raw_times(
            vec![vec![1.0], vec![2.0], vec![3.0]],
            vec![10.0, 20.0, 30.0],
            names(1),
        )
        .unwrap();
        let times = ds.times();
        assert_eq!(times, vec![0.0, 0.5, 1.0]);
        assert_eq!(ds.time_origin(), 10.0);
        assert_eq!(ds.time_scale(), 20.0);
    }

    #[test]
    fn constant_time_rejected() {
        let err = Dataset::from_raw_times(vec![vec![1.0], vec![2.0]], vec![5.0, 5.0], names(1))
            .unwrap_err();
        assert!(matches!(err, DriftError::ConstantTime));
    }

    #[test]
    fn standardize_constant_feature_flags_and_centers() {
        let ds = Dataset::from_raw_times(
            vec![vec![5.0], vec![5.0], vec![5.0]],
            vec![0.0, 1.0, 2.0],
            names(1),
        )
        .unwrap();
        let (std_ds, params) = ds.standardize();
        assert!(params.constant[0]);
        assert_eq!(params.stds[0], 1.0);
        for s in std_ds.samples() {
            assert_eq!(s.features[0], 0.0);
        }
    }

    #[test]
    fn standardize_matches_hand_computation() {
        // values {1,2,3,4}: mean 2.5, population std sqrt(1.25)
        let ds = Dataset::from_raw_times(
            vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]],
            vec![0.0, 1.0, 2.0, 3.0],
            names(1),
        )
        .unwrap();
        let (std_ds, _) = ds.standardize();
        let got = std_ds.column(0);
        let want = [-1.3416, -0.4472, 0.4472, 1.3416];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-4, "got {g}, want {w}");
        }
    }

    #[test]
    fn standardized_moments_are_zero_one() {
        let mut rng = crate::seed::rng_for(11, 0);
        use rand::Rng;
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random::<f64>() * 7.0 - 2.0, rng.random::<f64>()])
            .collect();
        let times: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let ds = Dataset::from_raw_times(rows, times, names(2)).unwrap();
        let (std_ds, _) = ds.standardize();
        for j in 0..2 {
            let col = std_ds.column(j);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9);
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn embed_time_polynomial_powers() {
        let out = embed_time(0.5, &TimeEmbedding::Polynomial { degree: 3 });
        assert_eq!(out, vec![0.5, 0.25, 0.125]);
    }

    #[test]
    fn embed_time_fourier_quarter_period() {
        let out = embed_time(
            0.25,
            &TimeEmbedding::Fourier {
                degree: 1,
                period: 1.0,
            },
        );
        assert!((out[0] - 1.0).abs() < 1e-12);
        assert!(out[1].abs() < 1e-12);
    }

    #[test]
    fn embed_time_binary_indicator() {
        assert_eq!(
            embed_time(0.7, &TimeEmbedding::Binary { change_point: 0.4 }),
            vec![1.0]
        );
        assert_eq!(
            embed_time(0.3, &TimeEmbedding::Binary { change_point: 0.4 }),
            vec![0.0]
        );
    }

    #[test]
    fn split_at_partitions() {
        let ds = Dataset::from_raw_times(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![0.0, 0.5, 1.0],
            names(1),
        )
        .unwrap();
        let (a, b) = ds.split_at(0.6).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(b.len(), 1);
        assert_eq!(a.len() + b.len(), ds.len());
    }

    #[test]
    fn split_two_points() {
        let ds =
            Dataset::from_raw_times(vec![vec![0.0], vec![1.0]], vec![0.0, 1.0], names(1)).unwrap();
        let (a, b) = ds.split_at(0.5).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
    }

    #[test]
    fn degenerate_split_rejected() {
        let ds = Dataset::from_normalized(
            (0..6).map(|i| vec![i as f64]).collect(),
            vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            names(1),
        )
        .unwrap();
        let err = ds.split_at(0.01).unwrap_err();
        assert!(matches!(err, DriftError::DegenerateSplit { .. }));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "a,b,t\n1.5,-2.25,100\n3.125,4.5,200\n0.75,9.0,300\n").unwrap();
        let (ds, params) = load_csv(&path, "t", false).unwrap();
        assert!(params.is_none());
        assert_eq!(ds.feature_names(), &["a".to_string(), "b".to_string()]);

        let out = dir.path().join("out.csv");
        write_csv(&ds, &out, "t").unwrap();
        let (ds2, _) = load_csv(&out, "t", false).unwrap();
        for (s, s2) in ds.samples().iter().zip(ds2.samples()) {
            for (v, v2) in s.features.iter().zip(&s2.features) {
                let rel = (v - v2).abs() / v.abs().max(1.0);
                assert!(rel < 1e-12);
            }
            assert!((s.time - s2.time).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        let err = load_csv(&path, "t", false).unwrap_err();
        assert!(matches!(err, DriftError::MissingColumn(_)));
    }

    #[test]
    fn csv_non_numeric_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "a,t\n1,0\nx,1\n").unwrap();
        let err = load_csv(&path, "t", false).unwrap_err();
        match err {
            DriftError::NonNumericCell { row, col } => {
                assert_eq!((row, col), (1, 0));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_empty_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "a,t\n").unwrap();
        let err = load_csv(&path, "t", false).unwrap_err();
        assert!(matches!(err, DriftError::EmptyDataset));
    }
}
