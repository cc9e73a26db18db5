//! Drift segmentation: fit a moment tree on embedded time targets and read
//! the segmentation off its leaves, together with per-segment occurrence
//! histograms and drift flags. No prior drift detection is needed.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{embed_time, Dataset, TimeEmbedding};
use crate::error::{DriftError, Result};
use crate::models::{fit_moment_tree, FitConfig, TimeModel};
use crate::seed;

/// Number of equal-width occurrence-histogram bins over `[0, 1]`.
pub const TIME_BINS: usize = 10;

/// Statistics of one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub size: usize,
    /// Mean embedded time target of the member samples.
    pub moment_vector: Vec<f64>,
    /// Occurrence counts over [`TIME_BINS`] equal-width bins.
    pub time_histogram: Vec<u64>,
    /// Total variation distance to the global time histogram.
    pub tv_distance: f64,
    pub drift_flag: bool,
}

/// A drift segmentation of a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segmentation {
    /// Per-sample segment id (tree leaf id, or a hashed leaf tuple for
    /// forest segmenters).
    pub assignments: Vec<u64>,
    pub segments: BTreeMap<u64, SegmentInfo>,
    pub embedding: TimeEmbedding,
    pub model: TimeModel,
    /// Global occurrence histogram of the dataset.
    pub global_histogram: Vec<u64>,
    /// Threshold applied to the per-segment TV distances.
    pub flag_threshold: f64,
}

pub fn time_bin(t: f64) -> usize {
    ((t * TIME_BINS as f64) as usize).min(TIME_BINS - 1)
}

fn histogram(times: impl Iterator<Item = f64>) -> Vec<u64> {
    let mut bins = vec![0u64; TIME_BINS];
    for t in times {
        bins[time_bin(t)] += 1;
    }
    bins
}

/// Total variation distance between two count histograms (each normalized
/// to a probability vector first).
pub fn histogram_tv(a: &[u64], b: &[u64]) -> f64 {
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    0.5 * a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs())
        .sum::<f64>()
}

impl Segmentation {
    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn flagged_segments(&self) -> Vec<u64> {
        self.segments
            .iter()
            .filter(|(_, info)| info.drift_flag)
            .map(|(&id, _)| id)
            .collect()
    }

    /// Sample indices assigned to `segment`.
    pub fn member_indices(&self, segment: u64) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == segment)
            .map(|(i, _)| i)
            .collect()
    }

    /// Registry mapping hashed composite segment ids back to the per-tree
    /// leaf tuples that produced them, for forest segmenters. Single trees
    /// use raw leaf ids and need no registry.
    pub fn forest_segment_registry(&self, ds: &Dataset) -> Result<BTreeMap<u64, Vec<usize>>> {
        if ds.len() != self.assignments.len() {
            return Err(DriftError::MismatchedDataset {
                expected: self.assignments.len(),
                got: ds.len(),
            });
        }
        let mut registry = BTreeMap::new();
        for (i, s) in ds.samples().iter().enumerate() {
            let tuple = self.model.leaf_tuple(&s.features)?;
            if let Some(previous) = registry.insert(self.assignments[i], tuple.clone()) {
                if previous != tuple {
                    return Err(DriftError::InvalidConfig(
                        "segment id hash collision".into(),
                    ));
                }
            }
        }
        Ok(registry)
    }
}

/// Builds a drift segmentation from a single moment tree, so segments are
/// crisp leaves. The embedding must be polynomial or Fourier.
pub fn segment(ds: &Dataset, emb: &TimeEmbedding, cfg: &FitConfig) -> Result<Segmentation> {
    if matches!(emb, TimeEmbedding::Binary { .. }) {
        return Err(DriftError::InvalidEmbedding);
    }
    emb.validate()?;
    let model = fit_moment_tree(ds, emb, cfg)?;
    segment_with_model(ds, emb, model, 0.0)
}

/// Assembles a [`Segmentation`] for an already-fitted moment model.
pub fn segment_with_model(
    ds: &Dataset,
    emb: &TimeEmbedding,
    model: TimeModel,
    flag_threshold: f64,
) -> Result<Segmentation> {
    let mut assignments = Vec::with_capacity(ds.len());
    for s in ds.samples() {
        let (id, _) = model.predict_moments(&s.features)?;
        assignments.push(id);
    }
    let global_histogram = histogram(ds.samples().iter().map(|s| s.time));

    let mut segments: BTreeMap<u64, SegmentInfo> = BTreeMap::new();
    let target_len = emb.output_len();
    for (i, s) in ds.samples().iter().enumerate() {
        let entry = segments
            .entry(assignments[i])
            .or_insert_with(|| SegmentInfo {
                size: 0,
                moment_vector: vec![0.0; target_len],
                time_histogram: vec![0; TIME_BINS],
                tv_distance: 0.0,
                drift_flag: false,
            });
        entry.size += 1;
        entry.time_histogram[time_bin(s.time)] += 1;
        for (m, v) in entry.moment_vector.iter_mut().zip(embed_time(s.time, emb)) {
            *m += v;
        }
    }
    for info in segments.values_mut() {
        for m in &mut info.moment_vector {
            *m /= info.size as f64;
        }
    }

    let seg = Segmentation {
        assignments,
        segments,
        embedding: *emb,
        model,
        global_histogram,
        flag_threshold,
    };
    Ok(flag_drifting_segments(seg, flag_threshold))
}

/// Flags segments whose occurrence histogram deviates from the global one by
/// at least `threshold` in total variation.
pub fn flag_drifting_segments(mut seg: Segmentation, threshold: f64) -> Segmentation {
    seg.flag_threshold = threshold;
    for info in seg.segments.values_mut() {
        info.tv_distance = histogram_tv(&info.time_histogram, &seg.global_histogram);
        info.drift_flag = info.tv_distance >= threshold;
    }
    seg
}

/// Mean squared distance between each sample's embedded time and its
/// segment's moment vector.
pub fn segmentation_mse(seg: &Segmentation, ds: &Dataset) -> Result<f64> {
    if seg.assignments.len() != ds.len() {
        return Err(DriftError::MismatchedDataset {
            expected: seg.assignments.len(),
            got: ds.len(),
        });
    }
    let mut total = 0.0;
    for (i, s) in ds.samples().iter().enumerate() {
        let info = seg
            .segments
            .get(&seg.assignments[i])
            .ok_or(DriftError::MismatchedDataset {
                expected: seg.assignments.len(),
                got: ds.len(),
            })?;
        let embedded = embed_time(s.time, &seg.embedding);
        total += embedded
            .iter()
            .zip(&info.moment_vector)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / ds.len() as f64)
}

/// Calibrates the drift-flag threshold on time-shuffled null segmentations:
/// returns the `quantile` empirical quantile of all per-segment TV distances
/// observed across `n_null` seeded null runs.
pub fn calibrate_flag_threshold(
    ds: &Dataset,
    emb: &TimeEmbedding,
    cfg: &FitConfig,
    n_null: usize,
    quantile: f64,
) -> Result<f64> {
    if n_null < 10 {
        return Err(DriftError::InvalidConfig("n_null must be >= 10".into()));
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(DriftError::DomainError("quantile"));
    }
    let tvs: Result<Vec<Vec<f64>>> = (0..n_null)
        .into_par_iter()
        .map(|run| {
            use rand::seq::SliceRandom;
            let mut order: Vec<usize> = (0..ds.len()).collect();
            let mut rng = seed::rng_for2(cfg.seed, seed::STREAM_NULL, run as u64);
            order.shuffle(&mut rng);
            // Reassign times over the same rows: destroys any time-feature link.
            let times = ds.times();
            let rows = ds.feature_rows();
            let shuffled_rows: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
            let null_ds =
                Dataset::from_normalized(shuffled_rows, times, ds.feature_names().to_vec())?;
            let seg = segment(&null_ds, emb, cfg)?;
            Ok(seg.segments.values().map(|info| info.tv_distance).collect())
        })
        .collect();
    let mut pooled: Vec<f64> = tvs?.into_iter().flatten().collect();
    if pooled.is_empty() {
        return Err(DriftError::EmptyDataset);
    }
    pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite tv"));
    let n = pooled.len();
    let idx = ((quantile * n as f64).ceil() as usize)
        .saturating_sub(1)
        .min(n - 1);
    Ok(pooled[idx])
}


#[cfg(test)]
mod forest_registry_tests {
    use super::*;
    use crate::models::{fit_moment_forest, hash_leaf_tuple};
    use rand::Rng;

    #[test]
    fn forest_segment_ids_map_back_to_leaf_tuples() {
        let mut rng = crate::seed::rng_for(36, 0);
        let n = 120;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let ds = Dataset::from_normalized(rows, times, vec!["a".into(), "b".into()]).unwrap();
        let cfg = FitConfig {
            n_trees: 5,
            min_leaf: 5,
            max_depth: 3,
            seed: 4,
            ..FitConfig::default()
        };
        let emb = TimeEmbedding::Polynomial { degree: 2 };
        let model = fit_moment_forest(&ds, &emb, &cfg).unwrap();
        let seg = segment_with_model(&ds, &emb, model, 0.0).unwrap();
        let registry = seg.forest_segment_registry(&ds).unwrap();
        assert_eq!(registry.len(), seg.n_segments());
        for (id, tuple) in &registry {
            assert_eq!(hash_leaf_tuple(tuple), *id);
        }
        // every sample's assignment resolves through the registry
        for (i, s) in ds.samples().iter().enumerate() {
            let tuple = seg.model.leaf_tuple(&s.features).unwrap();
            assert_eq!(registry[&seg.assignments[i]], tuple);
        }
    }
}
