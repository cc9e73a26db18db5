//! Global permutation feature importance, batch and out-of-fold variants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DriftError, Result};
use crate::localization::FoldModel;
use crate::models::TimeModel;
use crate::seed;

/// How a score vector was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    Pfi,
    Ipfi,
    ModelFi,
    LinearWeights,
}

/// Evaluation metric for permutation importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Classification accuracy of the before/after prediction.
    Accuracy,
    /// Negative mean squared error of the moment prediction.
    NegMse,
}

/// Targets for scoring a model.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Labels(&'a [u8]),
    Moments(&'a [Vec<f64>]),
}

/// Per-feature importance scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub scores: Vec<f64>,
    pub method: ImportanceMethod,
    pub n_repeats: usize,
    pub baseline_metric: f64,
    pub standard_errors: Vec<f64>,
}

impl ImportanceReport {
    /// Feature indices by descending score; equal scores break by index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[b]
                .partial_cmp(&self.scores[a])
                .expect("finite scores")
                .then(a.cmp(&b))
        });
        order
    }

    pub fn from_scores(scores: Vec<f64>, method: ImportanceMethod) -> Self {
        let n = scores.len();
        ImportanceReport {
            scores,
            method,
            n_repeats: 0,
            baseline_metric: 0.0,
            standard_errors: vec![0.0; n],
        }
    }
}

fn score_rows(m: &TimeModel, rows: &[Vec<f64>], targets: Targets, metric: Metric) -> Result<f64> {
    match (metric, targets) {
        (Metric::Accuracy, Targets::Labels(labels)) => {
            if labels.len() != rows.len() {
                return Err(DriftError::DimensionMismatch {
                    expected: rows.len(),
                    got: labels.len(),
                });
            }
            let mut correct = 0usize;
            for (row, &y) in rows.iter().zip(labels) {
                let predicted = u8::from(m.p_after(row)? >= 0.5);
                correct += usize::from(predicted == y);
            }
            Ok(correct as f64 / rows.len() as f64)
        }
        (Metric::NegMse, Targets::Moments(targets)) => {
            if targets.len() != rows.len() {
                return Err(DriftError::DimensionMismatch {
                    expected: rows.len(),
                    got: targets.len(),
                });
            }
            let mut total = 0.0;
            for (row, target) in rows.iter().zip(targets) {
                let (_, pred) = m.predict_moments(row)?;
                total += pred
                    .iter()
                    .zip(target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
            Ok(-total / rows.len() as f64)
        }
        _ => Err(DriftError::InvalidConfig(
            "metric does not match target kind".into(),
        )),
    }
}

fn permuted_column(n: usize, seed_value: u64, feature: usize, repeat: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng_for2(
        seed_value,
        seed::STREAM_PFI,
        ((feature as u64) << 32) | repeat as u64,
    );
    order.shuffle(&mut rng);
    order
}

/// Permutation feature importance of a fixed model on the given rows.
///
/// Per feature, the column is permuted `n_repeats` times (seeded) and the
/// importance is the baseline metric minus the mean permuted metric.
pub fn permutation_importance(
    m: &TimeModel,
    rows: &[Vec<f64>],
    targets: Targets,
    metric: Metric,
    n_repeats: usize,
    seed_value: u64,
) -> Result<ImportanceReport> {
    if n_repeats == 0 {
        return Err(DriftError::InvalidConfig("n_repeats must be >= 1".into()));
    }
    if rows.is_empty() {
        return Err(DriftError::EmptyDataset);
    }
    let d = rows[0].len();
    if m.n_features() != d {
        return Err(DriftError::DimensionMismatch {
            expected: m.n_features(),
            got: d,
        });
    }
    let baseline = score_rows(m, rows, targets, metric)?;

    let per_feature: Result<Vec<(f64, f64)>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let mut drops = Vec::with_capacity(n_repeats);
            for r in 0..n_repeats {
                let order = permuted_column(rows.len(), seed_value, j, r);
                let mut permuted = rows.to_vec();
                for (i, &src) in order.iter().enumerate() {
                    permuted[i][j] = rows[src][j];
                }
                let score = score_rows(m, &permuted, targets, metric)?;
                drops.push(baseline - score);
            }
            Ok(summarize(&drops))
        })
        .collect();
    let per_feature = per_feature?;
    Ok(ImportanceReport {
        scores: per_feature.iter().map(|&(mean, _)| mean).collect(),
        method: ImportanceMethod::Pfi,
        n_repeats,
        baseline_metric: baseline,
        standard_errors: per_feature.iter().map(|&(_, se)| se).collect(),
    })
}

fn summarize(drops: &[f64]) -> (f64, f64) {
    let r = drops.len() as f64;
    let mean = drops.iter().sum::<f64>() / r;
    let se = if drops.len() > 1 {
        let var = drops.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (r - 1.0);
        (var / r).sqrt()
    } else {
        0.0
    };
    (mean, se)
}

/// Out-of-fold permutation importance: every sample is scored by the fold
/// model that never saw it, avoiding optimistic importances.
pub fn permutation_importance_out_of_fold(
    fold_models: &[FoldModel],
    rows: &[Vec<f64>],
    labels: &[u8],
    n_repeats: usize,
    seed_value: u64,
) -> Result<ImportanceReport> {
    if n_repeats == 0 {
        return Err(DriftError::InvalidConfig("n_repeats must be >= 1".into()));
    }
    let n = rows.len();
    let d = rows[0].len();
    // sample -> fold model index
    let mut owner = vec![usize::MAX; n];
    for (f, fm) in fold_models.iter().enumerate() {
        for &i in &fm.eval_indices {
            owner[i] = f;
        }
    }
    if owner.iter().any(|&f| f == usize::MAX) {
        return Err(DriftError::InvalidConfig(
            "fold models do not cover the dataset".into(),
        ));
    }

    let score = |matrix: &[Vec<f64>]| -> Result<f64> {
        let mut correct = 0usize;
        for (i, row) in matrix.iter().enumerate() {
            let p = fold_models[owner[i]].model.p_after(row)?;
            correct += usize::from(u8::from(p >= 0.5) == labels[i]);
        }
        Ok(correct as f64 / n as f64)
    };
    let baseline = score(rows)?;

    let per_feature: Result<Vec<(f64, f64)>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let mut drops = Vec::with_capacity(n_repeats);
            for r in 0..n_repeats {
                let order = permuted_column(n, seed_value, j, r);
                let mut permuted = rows.to_vec();
                for (i, &src) in order.iter().enumerate() {
                    permuted[i][j] = rows[src][j];
                }
                drops.push(baseline - score(&permuted)?);
            }
            Ok(summarize(&drops))
        })
        .collect();
    let per_feature = per_feature?;
    Ok(ImportanceReport {
        scores: per_feature.iter().map(|&(mean, _)| mean).collect(),
        method: ImportanceMethod::Pfi,
        n_repeats,
        baseline_metric: baseline,
        standard_errors: per_feature.iter().map(|&(_, se)| se).collect(),
    })
}
