//! Trainable time-prediction models: moment trees/forests over embedded time
//! targets, probabilistic before/after classifiers, and a sparse linear
//! baseline.

pub mod linear;
pub mod tree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{embed_dataset, Dataset, TimeEmbedding};
use crate::error::{DriftError, Result};
use crate::seed;

pub use tree::{Tree, TreeNode};

/// Hyperparameters shared by every fit operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub n_trees: usize,
    /// Fraction of features evaluated per split in forests; `None` resolves
    /// to `sqrt(d)/d`.
    pub feature_subsample: Option<f64>,
    pub seed: u64,
    pub l1_strength: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_depth: 8,
            min_leaf: 5,
            n_trees: 100,
            feature_subsample: None,
            seed: 0,
            l1_strength: 0.01,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf < 1 {
            return Err(DriftError::InvalidConfig("min_leaf must be >= 1".into()));
        }
        if self.n_trees < 1 {
            return Err(DriftError::InvalidConfig("n_trees must be >= 1".into()));
        }
        if let Some(r) = self.feature_subsample {
            if !(r > 0.0 && r <= 1.0) {
                return Err(DriftError::InvalidConfig(
                    "feature_subsample must lie in (0, 1]".into(),
                ));
            }
        }
        if self.l1_strength < 0.0 {
            return Err(DriftError::InvalidConfig("l1_strength must be >= 0".into()));
        }
        Ok(())
    }

    fn candidates_per_split(&self, n_features: usize) -> usize {
        let rate = self
            .feature_subsample
            .unwrap_or_else(|| (n_features as f64).sqrt() / n_features as f64);
        ((rate * n_features as f64).ceil() as usize).clamp(1, n_features)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Bagged ensemble of trees with per-split feature subsampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub feature_subsample: f64,
    pub bootstrap: bool,
}

impl Forest {
    pub(crate) fn fit(
        rows: &[Vec<f64>],
        targets: &[Vec<f64>],
        labels: Option<&[u8]>,
        cfg: &FitConfig,
        bootstrap: bool,
    ) -> Result<Forest> {
        let n = rows.len();
        let n_candidates = cfg.candidates_per_split(rows[0].len());
        let trees: Result<Vec<Tree>> = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng_for2(cfg.seed, seed::STREAM_TREES, t as u64);
                let indices: Vec<usize> = if bootstrap {
                    use rand::Rng;
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                tree::fit_tree(
                    rows,
                    targets,
                    labels,
                    &indices,
                    cfg.max_depth,
                    cfg.min_leaf,
                    Some((n_candidates, rng)),
                )
            })
            .collect();
        Ok(Forest {
            trees: trees?,
            feature_subsample: n_candidates as f64 / rows[0].len() as f64,
            bootstrap,
        })
    }

    /// Mean of per-tree normalized importances, re-normalized.
    fn feature_importance(&self) -> Vec<f64> {
        let d = self.trees[0].n_features;
        let mut sum = vec![0.0; d];
        for t in &self.trees {
            for (s, &v) in sum.iter_mut().zip(&t.feature_importance) {
                *s += v;
            }
        }
        let total: f64 = sum.iter().sum();
        if total > 0.0 {
            sum.iter().map(|v| v / total).collect()
        } else {
            vec![0.0; d]
        }
    }
}

/// A trained time model `h(t | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    MomentTree {
        tree: Tree,
        embedding: TimeEmbedding,
    },
    MomentForest {
        forest: Forest,
        embedding: TimeEmbedding,
    },
    ProbTree {
        tree: Tree,
    },
    ProbForest {
        forest: Forest,
    },
    LinearL1 {
        weights: Vec<f64>,
        bias: f64,
        l1_strength: f64,
        /// Change point of the binary label embedding this model was fit on.
        change_point: f64,
    },
}

/// A fitted model together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeModel {
    pub spec: ModelSpec,
    pub config: FitConfig,
}

/// Classifier families accepted by `fit_prob_classifier`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Tree,
    Forest,
    Linear,
}

impl std::str::FromStr for ClassifierKind {
    type Err = DriftError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" => Ok(ClassifierKind::Tree),
            "forest" => Ok(ClassifierKind::Forest),
            "linear" => Ok(ClassifierKind::Linear),
            other => Err(DriftError::UnknownKind(other.to_string())),
        }
    }
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct VersionedModel {
    version: u32,
    model: TimeModel,
}

impl TimeModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&VersionedModel {
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<TimeModel> {
        let v: VersionedModel = serde_json::from_str(s)?;
        if v.version != MODEL_FORMAT_VERSION {
            return Err(DriftError::InvalidConfig(format!(
                "unsupported model format version {}",
                v.version
            )));
        }
        Ok(v.model)
    }

    pub fn n_features(&self) -> usize {
        match &self.spec {
            ModelSpec::MomentTree { tree, .. } | ModelSpec::ProbTree { tree } => tree.n_features,
            ModelSpec::MomentForest { forest, .. } | ModelSpec::ProbForest { forest } => {
                forest.trees[0].n_features
            }
            ModelSpec::LinearL1 { weights, .. } => weights.len(),
        }
    }

    pub fn is_classifier(&self) -> bool {
        matches!(
            self.spec,
            ModelSpec::ProbTree { .. } | ModelSpec::ProbForest { .. } | ModelSpec::LinearL1 { .. }
        )
    }

    pub fn embedding(&self) -> Option<&TimeEmbedding> {
        match &self.spec {
            ModelSpec::MomentTree { embedding, .. } | ModelSpec::MomentForest { embedding, .. } => {
                Some(embedding)
            }
            _ => None,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        let expected = self.n_features();
        if x.len() != expected {
            return Err(DriftError::DimensionMismatch {
                expected,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `[p(before), p(after)]`, each in `[eps, 1 - eps]`, summing to 1.
    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; 2]> {
        self.check_dim(x)?;
        let p_after = match &self.spec {
            ModelSpec::ProbTree { tree } => tree.predict_proba_after(x)?,
            ModelSpec::ProbForest { forest } => {
                let mut sum = 0.0;
                for t in &forest.trees {
                    sum += t.predict_proba_after(x)?;
                }
                sum / forest.trees.len() as f64
            }
            ModelSpec::LinearL1 { weights, bias, .. } => {
                linear::predict_proba_linear(weights, *bias, x)
            }
            _ => return Err(DriftError::WrongModelKind("predict_proba")),
        };
        Ok([1.0 - p_after, p_after])
    }

    /// Shorthand for `predict_proba(x)[1]`.
    pub fn p_after(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_proba(x)?[1])
    }

    /// Segment id and stored target mean for moment models. Forest segment
    /// ids are a stable hash of the per-tree leaf-id tuple.
    pub fn predict_moments(&self, x: &[f64]) -> Result<(u64, Vec<f64>)> {
        self.check_dim(x)?;
        match &self.spec {
            ModelSpec::MomentTree { tree, .. } => {
                let id = tree.leaf_id(x)?;
                Ok((id as u64, tree.predict_mean(x)?.to_vec()))
            }
            ModelSpec::MomentForest { forest, .. } => {
                let tuple = self.leaf_tuple(x)?;
                let mut mean = vec![0.0; forest.trees[0].predict_mean(x)?.len()];
                for t in &forest.trees {
                    for (m, &v) in mean.iter_mut().zip(t.predict_mean(x)?) {
                        *m += v;
                    }
                }
                for m in &mut mean {
                    *m /= forest.trees.len() as f64;
                }
                Ok((hash_leaf_tuple(&tuple), mean))
            }
            _ => Err(DriftError::WrongModelKind("predict_moments")),
        }
    }

    /// Leaf id per member tree, for forests.
    pub fn leaf_tuple(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.check_dim(x)?;
        match &self.spec {
            ModelSpec::MomentForest { forest, .. } | ModelSpec::ProbForest { forest } => forest
                .trees
                .iter()
                .map(|t| t.leaf_id(x))
                .collect::<Result<Vec<_>>>(),
            _ => Err(DriftError::WrongModelKind("leaf_tuple")),
        }
    }

    /// Fraction of member trees in which `x` and `y` share a leaf.
    pub fn rf_kernel(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let a = self.leaf_tuple(x)?;
        let b = self.leaf_tuple(y)?;
        let same = a.iter().zip(&b).filter(|(l, r)| l == r).count();
        Ok(same as f64 / a.len() as f64)
    }

    /// Impurity-based feature importance for tree models, normalized to sum
    /// one. Linear models expose `linear_weights` instead.
    pub fn model_feature_importance(&self) -> Result<Vec<f64>> {
        match &self.spec {
            ModelSpec::MomentTree { tree, .. } | ModelSpec::ProbTree { tree } => {
                Ok(tree.feature_importance.clone())
            }
            ModelSpec::MomentForest { forest, .. } | ModelSpec::ProbForest { forest } => {
                Ok(forest.feature_importance())
            }
            ModelSpec::LinearL1 { .. } => Err(DriftError::WrongModelKind(
                "model_feature_importance (use linear_weights)",
            )),
        }
    }

    /// Absolute weights of the linear model.
    pub fn linear_weights(&self) -> Result<Vec<f64>> {
        match &self.spec {
            ModelSpec::LinearL1 { weights, .. } => Ok(weights.clone()),
            _ => Err(DriftError::WrongModelKind("linear_weights")),
        }
    }
}

/// Stable FNV-1a hash of a leaf-id tuple, used as a composite segment id.
pub fn hash_leaf_tuple(tuple: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &id in tuple {
        for byte in (id as u64).to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    h
}

/// Fits a single moment tree on the embedded time targets.
pub fn fit_moment_tree(ds: &Dataset, emb: &TimeEmbedding, cfg: &FitConfig) -> Result<TimeModel> {
    cfg.validate()?;
    emb.validate()?;
    let targets = embed_dataset(ds, emb);
    let rows = ds.feature_rows();
    let indices: Vec<usize> = (0..rows.len()).collect();
    let tree = tree::fit_tree(
        &rows,
        &targets,
        None,
        &indices,
        cfg.max_depth,
        cfg.min_leaf,
        None,
    )?;
    Ok(TimeModel {
        spec: ModelSpec::MomentTree {
            tree,
            embedding: *emb,
        },
        config: cfg.clone(),
    })
}

/// Fits a bagged moment forest on the embedded time targets.
pub fn fit_moment_forest(ds: &Dataset, emb: &TimeEmbedding, cfg: &FitConfig) -> Result<TimeModel> {
    cfg.validate()?;
    emb.validate()?;
    if ds.len() < 2 * cfg.min_leaf {
        return Err(DriftError::TooFewSamples {
            needed: 2 * cfg.min_leaf,
            got: ds.len(),
        });
    }
    let targets = embed_dataset(ds, emb);
    let rows = ds.feature_rows();
    let forest = Forest::fit(&rows, &targets, None, cfg, true)?;
    Ok(TimeModel {
        spec: ModelSpec::MomentForest {
            forest,
            embedding: *emb,
        },
        config: cfg.clone(),
    })
}

/// Fits a probabilistic before/after classifier.
///
/// `change_point` is recorded for linear models (their implicit binary
/// embedding); trees and forests ignore it.
pub fn fit_prob_classifier(
    ds: &Dataset,
    labels: &[u8],
    cfg: &FitConfig,
    kind: ClassifierKind,
) -> Result<TimeModel> {
    fit_prob_classifier_rows(&ds.feature_rows(), labels, cfg, kind, 0.5)
}

/// Row-level variant of [`fit_prob_classifier`].
pub fn fit_prob_classifier_rows(
    rows: &[Vec<f64>],
    labels: &[u8],
    cfg: &FitConfig,
    kind: ClassifierKind,
    change_point: f64,
) -> Result<TimeModel> {
    cfg.validate()?;
    if rows.len() != labels.len() {
        return Err(DriftError::DimensionMismatch {
            expected: rows.len(),
            got: labels.len(),
        });
    }
    if rows.len() < 2 * cfg.min_leaf && kind != ClassifierKind::Linear {
        return Err(DriftError::TooFewSamples {
            needed: 2 * cfg.min_leaf,
            got: rows.len(),
        });
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(DriftError::SingleClass);
    }
    let spec = match kind {
        ClassifierKind::Tree => {
            let targets: Vec<Vec<f64>> = labels.iter().map(|&l| vec![l as f64]).collect();
            let indices: Vec<usize> = (0..rows.len()).collect();
            let tree = tree::fit_tree(
                rows,
                &targets,
                Some(labels),
                &indices,
                cfg.max_depth,
                cfg.min_leaf,
                None,
            )?;
            ModelSpec::ProbTree { tree }
        }
        ClassifierKind::Forest => {
            let targets: Vec<Vec<f64>> = labels.iter().map(|&l| vec![l as f64]).collect();
            let forest = Forest::fit(rows, &targets, Some(labels), cfg, true)?;
            ModelSpec::ProbForest { forest }
        }
        ClassifierKind::Linear => {
            let fit = linear::fit_logistic_l1(rows, labels, cfg.l1_strength, 1e-8, 1000);
            ModelSpec::LinearL1 {
                weights: fit.weights,
                bias: fit.bias,
                l1_strength: cfg.l1_strength,
                change_point,
            }
        }
    };
    Ok(TimeModel {
        spec,
        config: cfg.clone(),
    })
}
