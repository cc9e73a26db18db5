//! Drift localization: given a change point, score each sample's drift
//! involvement by the KL divergence between the cross-fitted before/after
//! classifier and the time prior, threshold into a drift locus, and split
//! the locus into before/after regions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DriftError, Result};
use crate::models::{fit_prob_classifier_rows, ClassifierKind, FitConfig, TimeModel};
use crate::seed;

/// Drift-region label of a single sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    Before,
    After,
    NotDrifting,
}

/// Output of [`localize`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocusReport {
    pub change_point: f64,
    /// Empirical `P[T = 1]` over the full dataset.
    pub prior: f64,
    pub theta: f64,
    /// Per-sample `D_KL(h(x) || Bernoulli(h0))`, `h0` the out-of-fold label mean.
    pub kl_scores: Vec<f64>,
    /// Out-of-fold probability that the sample was observed after the change.
    pub p_after: Vec<f64>,
    pub in_locus: Vec<bool>,
    pub region: Vec<Region>,
}

impl LocusReport {
    pub fn len(&self) -> usize {
        self.kl_scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kl_scores.is_empty()
    }

    pub fn locus_fraction(&self) -> f64 {
        self.in_locus.iter().filter(|&&b| b).count() as f64 / self.in_locus.len() as f64
    }

    /// Sample indices with the given region label.
    pub fn indices_in(&self, region: Region) -> Vec<usize> {
        self.region
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == region)
            .map(|(i, _)| i)
            .collect()
    }
}

/// KL divergence between Bernoulli(p) and Bernoulli(q).
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(DriftError::DomainError("p"));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(DriftError::DomainError("q"));
    }
    Ok(p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln())
}

/// How the locus threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThetaSpec {
    Fixed {
        value: f64,
    },
    /// Calibrate on permuted-label null runs: theta is the `quantile`
    /// empirical quantile of the pooled null KL scores.
    Auto {
        n_null: usize,
        quantile: f64,
    },
}

impl Default for ThetaSpec {
    fn default() -> Self {
        ThetaSpec::Auto {
            n_null: 20,
            quantile: 0.95,
        }
    }
}

/// Out-of-fold scores for one labeling: per-sample KL and p(after), plus the
/// fold models for downstream out-of-fold explainers.
pub struct CrossFitScores {
    pub kl: Vec<f64>,
    pub p_after: Vec<f64>,
    pub fold_models: Vec<FoldModel>,
}

/// A model trained with one fold held out.
pub struct FoldModel {
    pub model: TimeModel,
    /// Indices the model did not see during training.
    pub eval_indices: Vec<usize>,
    /// Mean training label: the fold's reference prior for the KL scores.
    pub h0: f64,
}

/// Deterministic fold assignment: a seeded shuffle chunked into `folds`
/// near-equal parts. `folds == n` is leave-one-out.
fn fold_assignment(n: usize, folds: usize, key: u64) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng_for(key, seed::STREAM_FOLDS);
    order.shuffle(&mut rng);
    let mut out = vec![Vec::new(); folds];
    for (pos, idx) in order.into_iter().enumerate() {
        out[pos % folds].push(idx);
    }
    out.into_iter().filter(|f| !f.is_empty()).collect()
}

/// Cross-fitted scoring of one binary labeling. Exposed for calibration and
/// the out-of-fold importance path.
pub fn cross_fit_scores(
    rows: &[Vec<f64>],
    labels: &[u8],
    cfg: &FitConfig,
    folds: usize,
    kind: ClassifierKind,
    change_point: f64,
    fold_key: u64,
) -> Result<CrossFitScores> {
    let n = rows.len();
    if folds < 2 || folds > n {
        return Err(DriftError::InvalidConfig(
            "folds must be >= 2 and <= n".into(),
        ));
    }
    let assignment = fold_assignment(n, folds, fold_key);
    let total_ones: usize = labels.iter().map(|&l| l as usize).sum();
    if total_ones == 0 || total_ones == n {
        return Err(DriftError::SingleClass);
    }

    let fold_models: Result<Vec<FoldModel>> = assignment
        .par_iter()
        .map(|eval_indices| {
            let mut train_rows = Vec::with_capacity(n - eval_indices.len());
            let mut train_labels = Vec::with_capacity(n - eval_indices.len());
            let in_eval: std::collections::HashSet<usize> = eval_indices.iter().copied().collect();
            for i in 0..n {
                if !in_eval.contains(&i) {
                    train_rows.push(rows[i].clone());
                    train_labels.push(labels[i]);
                }
            }
            let ones: usize = train_labels.iter().map(|&l| l as usize).sum();
            if ones == 0 || ones == train_labels.len() {
                return Err(DriftError::SingleClass);
            }
            let h0 = ones as f64 / train_labels.len() as f64;
            let model =
                fit_prob_classifier_rows(&train_rows, &train_labels, cfg, kind, change_point)?;
            Ok(FoldModel {
                model,
                eval_indices: eval_indices.clone(),
                h0,
            })
        })
        .collect();
    let fold_models = fold_models?;

    let mut kl = vec![0.0; n];
    let mut p_after = vec![0.0; n];
    for fm in &fold_models {
        for &i in &fm.eval_indices {
            let p = fm.model.p_after(&rows[i])?;
            p_after[i] = p;
            kl[i] = kl_bernoulli(p, fm.h0)?;
        }
    }
    Ok(CrossFitScores {
        kl,
        p_after,
        fold_models,
    })
}

/// Calibrates the locus threshold on permuted-label null runs.
///
/// Each run shuffles the binary labels (class balance preserved), re-scores
/// out-of-fold KL, and pools the scores; theta is their `quantile` empirical
/// quantile, so under the null the expected in-locus fraction is about
/// `1 - quantile`.
pub fn calibrate_threshold(
    ds: &Dataset,
    change_point: f64,
    cfg: &FitConfig,
    folds: usize,
    kind: ClassifierKind,
    n_null: usize,
    quantile: f64,
) -> Result<f64> {
    if n_null < 10 {
        return Err(DriftError::InvalidConfig("n_null must be >= 10".into()));
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(DriftError::DomainError("quantile"));
    }
    ds.split_at(change_point)?;
    let rows = ds.feature_rows();
    let labels = ds.labels_at(change_point);
    let null_scores: Result<Vec<Vec<f64>>> = (0..n_null)
        .into_par_iter()
        .map(|run| {
            use rand::seq::SliceRandom;
            let mut permuted = labels.clone();
            let mut rng = seed::rng_for2(cfg.seed, seed::STREAM_NULL, run as u64);
            permuted.shuffle(&mut rng);
            let scores = cross_fit_scores(
                &rows,
                &permuted,
                cfg,
                folds,
                kind,
                change_point,
                seed::mix(cfg.seed, run as u64),
            )?;
            Ok(scores.kl)
        })
        .collect();
    let mut pooled: Vec<f64> = null_scores?.into_iter().flatten().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite KL"));
    Ok(empirical_quantile(&pooled, quantile))
}

/// Inverse empirical CDF; `q -> 1` returns the maximum.
fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize)
        .saturating_sub(1)
        .min(n - 1);
    sorted[idx]
}

/// Runs drift localization at a known change point.
///
/// Labels every sample `1[t >= change_point]`, scores out-of-fold KL against
/// the fold prior, thresholds into the locus, and assigns before/after
/// regions by comparing the predicted after-probability with the prior.
pub fn localize(
    ds: &Dataset,
    change_point: f64,
    cfg: &FitConfig,
    folds: usize,
    kind: ClassifierKind,
    theta: ThetaSpec,
) -> Result<LocusReport> {
    localize_with_models(ds, change_point, cfg, folds, kind, theta).map(|(report, _)| report)
}

/// [`localize`] that also returns the fold models for out-of-fold PFI.
pub fn localize_with_models(
    ds: &Dataset,
    change_point: f64,
    cfg: &FitConfig,
    folds: usize,
    kind: ClassifierKind,
    theta: ThetaSpec,
) -> Result<(LocusReport, Vec<FoldModel>)> {
    ds.split_at(change_point)?;
    let rows = ds.feature_rows();
    let labels = ds.labels_at(change_point);
    let scores = cross_fit_scores(&rows, &labels, cfg, folds, kind, change_point, cfg.seed)?;

    let theta = match theta {
        ThetaSpec::Fixed { value } => value,
        ThetaSpec::Auto { n_null, quantile } => {
            calibrate_threshold(ds, change_point, cfg, folds, kind, n_null, quantile)?
        }
    };

    let prior = labels.iter().map(|&l| l as f64).sum::<f64>() / labels.len() as f64;
    let in_locus: Vec<bool> = scores.kl.iter().map(|&k| k >= theta).collect();
    let region: Vec<Region> = in_locus
        .iter()
        .zip(&scores.p_after)
        .map(|(&inside, &p)| {
            if !inside {
                Region::NotDrifting
            } else if p < prior {
                Region::Before
            } else {
                Region::After
            }
        })
        .collect();
    Ok((
        LocusReport {
            change_point,
            prior,
            theta,
            kl_scores: scores.kl,
            p_after: scores.p_after,
            in_locus,
            region,
        },
        scores.fold_models,
    ))
}

/// Convenience grid scan for an unknown change point: picks the candidate
/// maximizing the mean out-of-fold KL score. Not part of the localization
/// contract; drift detection proper is out of scope.
pub fn scan_change_point(
    ds: &Dataset,
    cfg: &FitConfig,
    folds: usize,
    kind: ClassifierKind,
    candidates: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(DriftError::InvalidConfig("no candidates".into()));
    }
    let rows = ds.feature_rows();
    let mut means = Vec::with_capacity(candidates.len());
    for &cp in candidates {
        ds.split_at(cp)?;
        let labels = ds.labels_at(cp);
        let scores = cross_fit_scores(&rows, &labels, cfg, folds, kind, cp, cfg.seed)?;
        means.push(scores.kl.iter().sum::<f64>() / scores.kl.len() as f64);
    }
    let best = (0..candidates.len())
        .max_by(|&a, &b| means[a].partial_cmp(&means[b]).unwrap())
        .unwrap();
    Ok((candidates[best], means))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use rand::Rng;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    fn small_cfg(seed: u64) -> FitConfig {
        FitConfig {
            n_trees: 15,
            max_depth: 6,
            min_leaf: 3,
            seed,
            ..FitConfig::default()
        }
    }

    #[test]
    fn kl_identity_is_zero() {
        assert_eq!(kl_bernoulli(0.5, 0.5).unwrap(), 0.0);
        for p in [0.1, 0.3, 0.7, 0.99] {
            assert!(kl_bernoulli(p, p).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn kl_closed_form_value() {
        let v = kl_bernoulli(0.9, 0.5).unwrap();
        assert!((v - 0.368064).abs() < 5e-7, "got {v}");
    }

    #[test]
    fn kl_domain_errors() {
        assert!(kl_bernoulli(0.0, 0.5).is_err());
        assert!(kl_bernoulli(0.5, 1.0).is_err());
    }

    #[test]
    fn quantile_limits() {
        let sorted = vec![0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(empirical_quantile(&sorted, 0.9999), 0.5);
        assert_eq!(empirical_quantile(&sorted, 0.2), 0.1);
        assert_eq!(empirical_quantile(&sorted, 0.5), 0.3);
    }

    #[test]
    fn permuted_labels_preserve_prior() {
        use rand::seq::SliceRandom;
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i >= 37)).collect();
        let mut permuted = labels.clone();
        let mut rng = crate::seed::rng_for(0, 1);
        permuted.shuffle(&mut rng);
        let mean = |v: &[u8]| v.iter().map(|&l| l as f64).sum::<f64>() / v.len() as f64;
        assert!((mean(&labels) - mean(&permuted)).abs() < 1e-12);
    }

    /// Time independent of features: calibrated localize flags few samples.
    #[test]
    fn null_stream_flags_little() {
        let mut rng = crate::seed::rng_for(21, 0);
        let n = 200;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let ds = Dataset::from_normalized(rows, times, names(2)).unwrap();
        let report = localize(
            &ds,
            0.5,
            &small_cfg(3),
            5,
            ClassifierKind::Forest,
            ThetaSpec::Auto {
                n_null: 10,
                quantile: 0.95,
            },
        )
        .unwrap();
        assert!(
            report.locus_fraction() <= 0.10,
            "flagged {}",
            report.locus_fraction()
        );
    }

    /// Two clusters swapped at the change point: localization recovers the
    /// regions.
    #[test]
    fn swapped_clusters_recovered() {
        let mut rng = crate::seed::rng_for(22, 0);
        let n = 200;
        let mut rows = Vec::with_capacity(n);
        let mut times = Vec::with_capacity(n);
        for i in 0..n {
            let t = i as f64 / (n - 1) as f64;
            let center = if t < 0.5 { -3.0 } else { 3.0 };
            rows.push(vec![
                center + 0.3 * rng.random::<f64>(),
                rng.random::<f64>(),
            ]);
            times.push(t);
        }
        let ds = Dataset::from_normalized(rows, times, names(2)).unwrap();
        let (report, _) = localize_with_models(
            &ds,
            0.5,
            &small_cfg(5),
            5,
            ClassifierKind::Forest,
            ThetaSpec::Auto {
                n_null: 10,
                quantile: 0.95,
            },
        )
        .unwrap();
        assert!(report.locus_fraction() >= 0.9);
        let correct = ds
            .samples()
            .iter()
            .zip(&report.region)
            .filter(|(s, &r)| {
                (s.time < 0.5 && r == Region::Before) || (s.time >= 0.5 && r == Region::After)
            })
            .count();
        assert!(correct as f64 / n as f64 >= 0.9, "correct {correct}");
    }

    #[test]
    fn locus_is_monotone_in_theta() {
        let mut rng = crate::seed::rng_for(23, 0);
        let n = 120;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![i as f64 / n as f64 + 0.1 * rng.random::<f64>()])
            .collect();
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let ds = Dataset::from_normalized(rows, times, names(1)).unwrap();
        let base = localize(
            &ds,
            0.5,
            &small_cfg(7),
            5,
            ClassifierKind::Forest,
            ThetaSpec::Fixed { value: 0.0 },
        )
        .unwrap();
        let mut last: Option<Vec<bool>> = None;
        for theta in [0.0, 0.05, 0.2, 1.0] {
            let in_locus: Vec<bool> = base.kl_scores.iter().map(|&k| k >= theta).collect();
            if let Some(prev) = &last {
                for (now, before) in in_locus.iter().zip(prev) {
                    assert!(!now | before, "locus grew when theta rose");
                }
            }
            last = Some(in_locus);
        }
    }

    #[test]
    fn regions_partition_locus() {
        let mut rng = crate::seed::rng_for(24, 0);
        let n = 150;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![if i < n / 2 { 0.0 } else { 5.0 } + rng.random::<f64>()])
            .collect();
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let ds = Dataset::from_normalized(rows, times, names(1)).unwrap();
        let report = localize(
            &ds,
            0.5,
            &small_cfg(9),
            5,
            ClassifierKind::Forest,
            ThetaSpec::Fixed { value: 0.05 },
        )
        .unwrap();
        for i in 0..report.len() {
            let inside = report.in_locus[i];
            let region = report.region[i];
            assert_eq!(inside, region != Region::NotDrifting);
            assert_eq!(inside, report.kl_scores[i] >= report.theta);
        }
    }

    #[test]
    fn leave_one_out_supported() {
        let mut rng = crate::seed::rng_for(25, 0);
        let n = 30;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![if i < n / 2 { -2.0 } else { 2.0 } + rng.random::<f64>()])
            .collect();
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let ds = Dataset::from_normalized(rows, times, names(1)).unwrap();
        let cfg = FitConfig {
            n_trees: 5,
            min_leaf: 2,
            seed: 1,
            ..FitConfig::default()
        };
        let report = localize(
            &ds,
            0.5,
            &cfg,
            n,
            ClassifierKind::Tree,
            ThetaSpec::Fixed { value: 0.1 },
        )
        .unwrap();
        assert_eq!(report.len(), n);
        assert!(report.locus_fraction() > 0.8);
    }

    #[test]
    fn scan_finds_change_point_region() {
        let mut rng = crate::seed::rng_for(26, 0);
        let n = 160;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                vec![if t < 0.4 { -2.0 } else { 2.0 } + rng.random::<f64>()]
            })
            .collect();
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let ds = Dataset::from_normalized(rows, times, names(1)).unwrap();
        let (best, _) = scan_change_point(
            &ds,
            &small_cfg(2),
            5,
            ClassifierKind::Forest,
            &[0.2, 0.3, 0.4, 0.5, 0.6, 0.8],
        )
        .unwrap();
        assert!((best - 0.4).abs() <= 0.1, "best {best}");
    }
}
