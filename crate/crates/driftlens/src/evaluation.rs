//! Scores importance rankings against generator ground truth (Mann-Whitney
//! AUC) and runs the desk-scale experiment grid.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{embed_dataset, Dataset, TimeEmbedding};
use crate::error::{DriftError, Result};
use crate::explainers::{permutation_importance, Metric, Targets};
use crate::generators::{gen_base, gen_bayes_net, perturb, BaseKind, BayesNetSpec, PerturbKind};
use crate::models::{
    fit_moment_forest, fit_moment_tree, fit_prob_classifier_rows, ClassifierKind, FitConfig,
    TimeModel,
};
use crate::seed;
use crate::stream::{run_ipfi_stream, StreamModelKind, StreamProtocol};

/// AUC of ranking drifting features above non-drifting ones: the probability
/// that a uniformly random drifting feature outranks a random non-drifting
/// one, ties counted one half. Computed from average ranks.
pub fn feature_auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(DriftError::DimensionMismatch {
            expected: truth.len(),
            got: scores.len(),
        });
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(DriftError::SingleClassTruth);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(DriftError::DomainError("scores"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg_rank;
        }
        i = j;
    }
    let rank_sum_pos: f64 = truth
        .iter()
        .zip(&ranks)
        .filter(|(&t, _)| t)
        .map(|(_, &r)| r)
        .sum();
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// One grid-cell result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub generator: String,
    pub perturbation: String,
    pub k: usize,
    pub model: String,
    pub method: String,
    pub seed: u64,
    pub auc: f64,
    pub runtime_ms: u64,
}

/// A failed grid cell, kept so the grid can continue.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellFailure {
    pub generator: String,
    pub perturbation: String,
    pub k: usize,
    pub model: String,
    pub method: String,
    pub seed: u64,
    pub message: String,
}

/// Cartesian experiment grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub generators: Vec<String>,
    pub perturbations: Vec<String>,
    pub n_features: Vec<usize>,
    pub models: Vec<String>,
    pub methods: Vec<String>,
    pub repeats: usize,
    pub n: usize,
    pub seed: u64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.generators.is_empty()
            || self.perturbations.is_empty()
            || self.n_features.is_empty()
            || self.models.is_empty()
            || self.methods.is_empty()
            || self.repeats == 0
            || self.n == 0
        {
            return Err(DriftError::InvalidConfig(
                "grid axes must be non-empty".into(),
            ));
        }
        Ok(())
    }
}

/// Records plus failures from one grid run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GridOutcome {
    pub records: Vec<EvalRecord>,
    pub failures: Vec<CellFailure>,
}

/// Per-cell summary row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub generator: String,
    pub perturbation: String,
    pub k: usize,
    pub model: String,
    pub method: String,
    pub runs: usize,
    pub mean_auc: f64,
    pub std_auc: f64,
}

/// The batch protocol's time embedding.
pub fn protocol_embedding() -> TimeEmbedding {
    TimeEmbedding::Fourier {
        degree: 5,
        period: 1.0,
    }
}

/// A generated stream plus the truth used for scoring.
struct CellStream {
    dataset: Dataset,
    truth: Vec<bool>,
}

fn build_stream(
    generator: &str,
    perturbation: &str,
    k: usize,
    n: usize,
    cell_seed: u64,
) -> Result<CellStream> {
    if let Some(rest) = generator.strip_prefix("bayes:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 4 {
            return Err(DriftError::UnknownKind(generator.to_string()));
        }
        let mode = parts[0];
        let n_direct: usize = parts[1]
            .parse()
            .map_err(|_| DriftError::UnknownKind(generator.to_string()))?;
        let n_implicit: usize = parts[2]
            .parse()
            .map_err(|_| DriftError::UnknownKind(generator.to_string()))?;
        let n_none: usize = parts[3]
            .parse()
            .map_err(|_| DriftError::UnknownKind(generator.to_string()))?;
        let spec = BayesNetSpec::random_dag(n_direct, n_implicit, n_none, 0.15, cell_seed);
        let spec = match mode {
            "complete" => spec,
            "shallow" => spec.shallow_spec(),
            _ => return Err(DriftError::UnknownKind(generator.to_string())),
        };
        let stream = gen_bayes_net(&spec, n, seed::mix(cell_seed, 1))?;
        let (dataset, _) = stream.dataset.standardize();
        return Ok(CellStream {
            dataset,
            truth: stream.drifting_features,
        });
    }

    let base: BaseKind = generator.parse()?;
    let pk: PerturbKind = perturbation.parse()?;
    let ds = gen_base(base, n, cell_seed)?;
    let (standardized, _) = ds.standardize();
    let stream = perturb(&standardized, pk, k, seed::mix(cell_seed, 2))?;
    Ok(CellStream {
        dataset: stream.dataset,
        truth: stream.drifting_features,
    })
}

/// Seeded 75/25 split in stream order.
fn split_75_25(n: usize, key: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng_for(key, seed::STREAM_SPLIT);
    order.shuffle(&mut rng);
    let eval_len = (n / 4).max(1);
    (order[eval_len..].to_vec(), order[..eval_len].to_vec())
}

fn fit_protocol_model(train: &Dataset, model: &str, cfg: &FitConfig) -> Result<TimeModel> {
    match model {
        "tree" => fit_moment_tree(train, &protocol_embedding(), cfg),
        "forest" => fit_moment_forest(train, &protocol_embedding(), cfg),
        "linear" => {
            let labels = train.labels_at(0.5);
            fit_prob_classifier_rows(
                &train.feature_rows(),
                &labels,
                cfg,
                ClassifierKind::Linear,
                0.5,
            )
        }
        other => Err(DriftError::UnknownKind(other.to_string())),
    }
}

/// Importance scores for one (model, method) cell under the batch/stream
/// protocol.
fn cell_scores(stream: &CellStream, model: &str, method: &str, cell_seed: u64) -> Result<Vec<f64>> {
    let cfg = FitConfig {
        seed: cell_seed,
        ..FitConfig::default()
    };
    match method {
        "pfi" => {
            let (train_idx, eval_idx) = split_75_25(stream.dataset.len(), cell_seed);
            let train = stream.dataset.subset(&train_idx)?;
            let eval = stream.dataset.subset(&eval_idx)?;
            let fitted = fit_protocol_model(&train, model, &cfg)?;
            let eval_rows = eval.feature_rows();
            let report = if model == "linear" {
                let labels = eval.labels_at(0.5);
                permutation_importance(
                    &fitted,
                    &eval_rows,
                    Targets::Labels(&labels),
                    Metric::Accuracy,
                    5,
                    cell_seed,
                )?
            } else {
                let targets = embed_dataset(&eval, &protocol_embedding());
                permutation_importance(
                    &fitted,
                    &eval_rows,
                    Targets::Moments(&targets),
                    Metric::NegMse,
                    5,
                    cell_seed,
                )?
            };
            Ok(report.scores)
        }
        "fi" => {
            let fitted = fit_protocol_model(&stream.dataset, model, &cfg)?;
            fitted.model_feature_importance()
        }
        "ipfi" => {
            let kind = match model {
                "tree" => StreamModelKind::Tree,
                "forest" => StreamModelKind::Forest,
                other => {
                    return Err(DriftError::WrongModelKind(match other {
                        "linear" => "ipfi is not available for the linear model",
                        _ => "unknown model",
                    }))
                }
            };
            let proto = StreamProtocol {
                model: kind,
                ..StreamProtocol::new(protocol_embedding())
            };
            let result = run_ipfi_stream(&stream.dataset, &cfg, &proto)?;
            Ok(result.stream_sums)
        }
        other => Err(DriftError::UnknownKind(other.to_string())),
    }
}

/// Runs one grid cell end to end.
pub fn run_cell(
    generator: &str,
    perturbation: &str,
    k: usize,
    model: &str,
    method: &str,
    n: usize,
    cell_seed: u64,
) -> Result<(f64, u64)> {
    let start = Instant::now();
    let stream = build_stream(generator, perturbation, k, n, cell_seed)?;
    let scores = cell_scores(&stream, model, method, cell_seed)?;
    let auc = feature_auc(&scores, &stream.truth)?;
    Ok((auc, start.elapsed().as_millis() as u64))
}

/// Runs the full grid; cells run in parallel, failures are recorded and the
/// grid continues. Record order is canonical (axis nesting, then repeat).
pub fn run_grid(grid: &GridSpec) -> Result<GridOutcome> {
    grid.validate()?;
    struct Cell {
        generator: String,
        perturbation: String,
        k: usize,
        model: String,
        method: String,
        repeat: usize,
        index: u64,
    }
    let mut cells = Vec::new();
    let mut index = 0u64;
    for generator in &grid.generators {
        let perturbations: Vec<String> = if generator.starts_with("bayes:") {
            vec!["none".to_string()]
        } else {
            grid.perturbations.clone()
        };
        let ks: Vec<usize> = if generator.starts_with("bayes:") {
            vec![0]
        } else {
            grid.n_features.clone()
        };
        for perturbation in &perturbations {
            for &k in &ks {
                for model in &grid.models {
                    for method in &grid.methods {
                        for repeat in 0..grid.repeats {
                            cells.push(Cell {
                                generator: generator.clone(),
                                perturbation: perturbation.clone(),
                                k,
                                model: model.clone(),
                                method: method.clone(),
                                repeat,
                                index,
                            });
                            index += 1;
                        }
                    }
                }
            }
        }
    }

    let results: Vec<std::result::Result<EvalRecord, CellFailure>> = cells
        .par_iter()
        .map(|cell| {
            let cell_seed = seed::mix(grid.seed, cell.index ^ ((cell.repeat as u64) << 40));
            match run_cell(
                &cell.generator,
                &cell.perturbation,
                cell.k,
                &cell.model,
                &cell.method,
                grid.n,
                cell_seed,
            ) {
                Ok((auc, runtime_ms)) => Ok(EvalRecord {
                    generator: cell.generator.clone(),
                    perturbation: cell.perturbation.clone(),
                    k: cell.k,
                    model: cell.model.clone(),
                    method: cell.method.clone(),
                    seed: cell_seed,
                    auc,
                    runtime_ms,
                }),
                Err(e) => Err(CellFailure {
                    generator: cell.generator.clone(),
                    perturbation: cell.perturbation.clone(),
                    k: cell.k,
                    model: cell.model.clone(),
                    method: cell.method.clone(),
                    seed: cell_seed,
                    message: e.to_string(),
                }),
            }
        })
        .collect();

    let mut outcome = GridOutcome::default();
    for r in results {
        match r {
            Ok(rec) => outcome.records.push(rec),
            Err(f) => outcome.failures.push(f),
        }
    }
    Ok(outcome)
}

/// Writes records as CSV with the fixed column set. With `zero_runtimes`
/// the timing column is written as 0 so reruns are byte-identical.
pub fn write_records_csv(
    records: &[EvalRecord],
    path: impl AsRef<Path>,
    zero_runtimes: bool,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record([
        "generator",
        "perturbation",
        "k",
        "model",
        "method",
        "seed",
        "auc",
        "runtime_ms",
    ])?;
    for r in records {
        w.write_record([
            r.generator.as_str(),
            r.perturbation.as_str(),
            &r.k.to_string(),
            &r.model,
            &r.method,
            &r.seed.to_string(),
            &format!("{}", r.auc),
            &if zero_runtimes { 0 } else { r.runtime_ms }.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and standard deviation per cell, plus means pooled over generators
/// (both views are reported since the pooling weights are a choice).
pub fn summarize(outcome: &GridOutcome) -> (Vec<SummaryRow>, Vec<SummaryRow>) {
    use std::collections::BTreeMap;
    let mut per_cell: BTreeMap<(String, String, usize, String, String), Vec<f64>> = BTreeMap::new();
    let mut pooled: BTreeMap<(String, usize, String, String), Vec<f64>> = BTreeMap::new();
    for r in &outcome.records {
        per_cell
            .entry((
                r.generator.clone(),
                r.perturbation.clone(),
                r.k,
                r.model.clone(),
                r.method.clone(),
            ))
            .or_default()
            .push(r.auc);
        pooled
            .entry((
                r.perturbation.clone(),
                r.k,
                r.model.clone(),
                r.method.clone(),
            ))
            .or_default()
            .push(r.auc);
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let cell_rows = per_cell
        .into_iter()
        .map(|((generator, perturbation, k, model, method), aucs)| {
            let (mean_auc, std_auc) = stats(&aucs);
            SummaryRow {
                generator,
                perturbation,
                k,
                model,
                method,
                runs: aucs.len(),
                mean_auc,
                std_auc,
            }
        })
        .collect();
    let pooled_rows = pooled
        .into_iter()
        .map(|((perturbation, k, model, method), aucs)| {
            let (mean_auc, std_auc) = stats(&aucs);
            SummaryRow {
                generator: "(pooled)".to_string(),
                perturbation,
                k,
                model,
                method,
                runs: aucs.len(),
                mean_auc,
                std_auc,
            }
        })
        .collect();
    (cell_rows, pooled_rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_perfect_ranking() {
        let auc = feature_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(auc, 1.0);
    }

    #[test]
    fn auc_all_ties_is_half() {
        let auc = feature_auc(&[0.5, 0.5, 0.5], &[true, false, false]).unwrap();
        assert_eq!(auc, 0.5);
    }

    #[test]
    fn auc_split_pair() {
        // drifting {0.9, 0.1}, non-drifting {0.5}: one win, one loss
        let auc = feature_auc(&[0.9, 0.1, 0.5], &[true, true, false]).unwrap();
        assert_eq!(auc, 0.5);
    }

    #[test]
    fn auc_single_class_rejected() {
        assert!(matches!(
            feature_auc(&[0.1, 0.2], &[true, true]).unwrap_err(),
            DriftError::SingleClassTruth
        ));
    }

    /// Rank-based implementation equals the brute-force pair count.
    #[test]
    fn auc_matches_pair_counting_oracle() {
        let mut rng = crate::seed::rng_for(71, 0);
        use rand::Rng;
        for _ in 0..200 {
            let d = rng.random_range(2..=5);
            let scores: Vec<f64> = (0..d)
                .map(|_| (rng.random::<f64>() * 4.0).round() / 4.0)
                .collect();
            let truth: Vec<bool> = (0..d).map(|_| rng.random_bool(0.5)).collect();
            let n_pos = truth.iter().filter(|&&t| t).count();
            if n_pos == 0 || n_pos == d {
                continue;
            }
            let mut wins = 0.0;
            let mut pairs = 0.0;
            for i in 0..d {
                if !truth[i] {
                    continue;
                }
                for j in 0..d {
                    if truth[j] {
                        continue;
                    }
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
            let oracle = wins / pairs;
            let auc = feature_auc(&scores, &truth).unwrap();
            assert!((auc - oracle).abs() < 1e-12, "{auc} vs {oracle}");
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let scores = vec![0.1, 0.7, 0.3, 0.9, 0.5];
        let truth = vec![false, true, false, true, true];
        let base = feature_auc(&scores, &truth).unwrap();
        let transformed: Vec<f64> = scores.iter().map(|s| (s * 3.0).exp() + 7.0).collect();
        assert_eq!(feature_auc(&transformed, &truth).unwrap(), base);
    }

    #[test]
    fn auc_complement_identity() {
        let scores = vec![0.1, 0.7, 0.3, 0.9];
        let truth = vec![false, true, false, true];
        let flipped: Vec<bool> = truth.iter().map(|t| !t).collect();
        let a = feature_auc(&scores, &truth).unwrap();
        let b = feature_auc(&scores, &flipped).unwrap();
        assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tiny_grid_bookkeeping() {
        let grid = GridSpec {
            generators: vec!["mixed".to_string()],
            perturbations: vec!["shift:5".to_string()],
            n_features: vec![1],
            models: vec!["forest".to_string()],
            methods: vec!["pfi".to_string()],
            repeats: 3,
            n: 300,
            seed: 5,
        };
        let outcome = run_grid(&grid).unwrap();
        assert_eq!(outcome.records.len(), 3);
        assert!(outcome.failures.is_empty());
        let (cells, pooled) = summarize(&outcome);
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].runs, 3);
        assert_eq!(pooled.len(), 1);
    }

    #[test]
    fn grid_reruns_reproduce_auc() {
        let grid = GridSpec {
            generators: vec!["gaussian_blobs".to_string()],
            perturbations: vec!["shift:3".to_string()],
            n_features: vec![1],
            models: vec!["tree".to_string()],
            methods: vec!["pfi".to_string(), "fi".to_string()],
            repeats: 2,
            n: 200,
            seed: 9,
        };
        let a = run_grid(&grid).unwrap();
        let b = run_grid(&grid).unwrap();
        let aucs = |o: &GridOutcome| o.records.iter().map(|r| r.auc).collect::<Vec<_>>();
        assert_eq!(aucs(&a), aucs(&b));
    }

    #[test]
    fn linear_fi_cell_fails_gracefully() {
        let grid = GridSpec {
            generators: vec!["mixed".to_string()],
            perturbations: vec!["zero".to_string()],
            n_features: vec![1],
            models: vec!["linear".to_string()],
            methods: vec!["fi".to_string()],
            repeats: 1,
            n: 200,
            seed: 1,
        };
        let outcome = run_grid(&grid).unwrap();
        assert!(outcome.records.is_empty());
        assert_eq!(outcome.failures.len(), 1);
    }
}
