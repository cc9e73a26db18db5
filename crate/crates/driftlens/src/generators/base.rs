//! Stationary base generators. The class label is emitted as a regular
//! feature column so perturbations act on the joint distribution of data
//! and label.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{DriftError, Result};
use crate::seed;

use super::time_grid;

/// Base generator family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseKind {
    /// Loan-approval generator; `function` selects classification rule 1-3.
    Agrawal { function: u8 },
    /// Two booleans and two numerics with a sine decision boundary.
    Mixed,
    /// Weighted Gaussian centroids.
    RandomRbf {
        n_centroids: usize,
        n_features: usize,
        spread: f64,
    },
    /// Random decision tree labeling uniform features.
    RandomTree { n_features: usize },
    /// Isotropic Gaussian blobs; label is the blob parity.
    GaussianBlobs {
        n_blobs: usize,
        n_features: usize,
        separation: f64,
    },
}

impl BaseKind {
    pub fn name(&self) -> String {
        match self {
            BaseKind::Agrawal { function } => format!("agrawal:{function}"),
            BaseKind::Mixed => "mixed".to_string(),
            BaseKind::RandomRbf { .. } => "random_rbf".to_string(),
            BaseKind::RandomTree { .. } => "random_tree".to_string(),
            BaseKind::GaussianBlobs { .. } => "gaussian_blobs".to_string(),
        }
    }
}

impl std::str::FromStr for BaseKind {
    type Err = DriftError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts[0] {
            "agrawal" => {
                let function = match parts.get(1) {
                    Some(f) => f
                        .parse::<u8>()
                        .map_err(|_| DriftError::UnknownKind(s.to_string()))?,
                    None => 1,
                };
                if !(1..=3).contains(&function) {
                    return Err(DriftError::UnknownKind(s.to_string()));
                }
                Ok(BaseKind::Agrawal { function })
            }
            "mixed" => Ok(BaseKind::Mixed),
            "random_rbf" => Ok(BaseKind::RandomRbf {
                n_centroids: 20,
                n_features: 10,
                spread: 0.15,
            }),
            "random_tree" => Ok(BaseKind::RandomTree { n_features: 10 }),
            "gaussian_blobs" => Ok(BaseKind::GaussianBlobs {
                n_blobs: 2,
                n_features: 2,
                separation: 5.0,
            }),
            _ => Err(DriftError::UnknownKind(s.to_string())),
        }
    }
}

/// Generates a stationary stream of `n` samples on the uniform time grid.
pub fn gen_base(kind: BaseKind, n: usize, seed_value: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(DriftError::EmptyDataset);
    }
    let mut rng = seed::rng_for(seed_value, seed::STREAM_GEN);
    let (rows, names) = match kind {
        BaseKind::Agrawal { function } => agrawal(&mut rng, n, function),
        BaseKind::Mixed => mixed(&mut rng, n),
        BaseKind::RandomRbf {
            n_centroids,
            n_features,
            spread,
        } => random_rbf(&mut rng, n, n_centroids, n_features, spread),
        BaseKind::RandomTree { n_features } => random_tree(&mut rng, n, n_features),
        BaseKind::GaussianBlobs {
            n_blobs,
            n_features,
            separation,
        } => gaussian_blobs(&mut rng, n, n_blobs, n_features, separation),
    };
    Dataset::from_normalized(rows, time_grid(n), names)
}

/// Published AGRAWAL classification rules (first three functions).
pub fn agrawal_label(function: u8, salary: f64, age: f64, elevel: f64) -> f64 {
    let group_a = match function {
        1 => age < 40.0 || age >= 60.0,
        2 => {
            if age < 40.0 {
                (50_000.0..=100_000.0).contains(&salary)
            } else if age < 60.0 {
                (75_000.0..=125_000.0).contains(&salary)
            } else {
                (25_000.0..=75_000.0).contains(&salary)
            }
        }
        3 => {
            if age < 40.0 {
                elevel == 0.0 || elevel == 1.0
            } else if age < 60.0 {
                (1.0..=3.0).contains(&elevel)
            } else {
                (2.0..=4.0).contains(&elevel)
            }
        }
        _ => unreachable!("function validated at parse time"),
    };
    f64::from(group_a)
}

fn agrawal(rng: &mut impl Rng, n: usize, function: u8) -> (Vec<Vec<f64>>, Vec<String>) {
    let names = [
        "salary",
        "commission",
        "age",
        "elevel",
        "car",
        "zipcode",
        "hvalue",
        "hyears",
        "loan",
        "label",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows = (0..n)
        .map(|_| {
            let salary = rng.random_range(20_000.0..150_000.0);
            let commission = if salary >= 75_000.0 {
                0.0
            } else {
                rng.random_range(10_000.0..75_000.0)
            };
            let age = rng.random_range(20..=80) as f64;
            let elevel = rng.random_range(0..=4) as f64;
            let car = rng.random_range(1..=20) as f64;
            let zipcode = rng.random_range(0..=8) as f64;
            let hvalue = (9.0 - zipcode) * 100_000.0 * rng.random_range(0.5..1.5);
            let hyears = rng.random_range(1..=30) as f64;
            let loan = rng.random_range(0.0..500_000.0);
            let label = agrawal_label(function, salary, age, elevel);
            vec![
                salary, commission, age, elevel, car, zipcode, hvalue, hyears, loan, label,
            ]
        })
        .collect();
    (rows, names)
}

fn mixed(rng: &mut impl Rng, n: usize) -> (Vec<Vec<f64>>, Vec<String>) {
    let names = ["v", "w", "x", "y", "label"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = (0..n)
        .map(|_| {
            let v = f64::from(rng.random_bool(0.5));
            let w = f64::from(rng.random_bool(0.5));
            let x: f64 = rng.random();
            let y: f64 = rng.random();
            let conditions = u8::from(v == 1.0)
                + u8::from(w == 1.0)
                + u8::from(y < 0.5 + 0.3 * (3.0 * std::f64::consts::PI * x).sin());
            let label = f64::from(conditions >= 2);
            vec![v, w, x, y, label]
        })
        .collect();
    (rows, names)
}

fn random_rbf(
    rng: &mut impl Rng,
    n: usize,
    n_centroids: usize,
    n_features: usize,
    spread: f64,
) -> (Vec<Vec<f64>>, Vec<String>) {
    struct Centroid {
        center: Vec<f64>,
        weight: f64,
        std: f64,
        class: f64,
    }
    let centroids: Vec<Centroid> = (0..n_centroids.max(1))
        .map(|_| Centroid {
            center: (0..n_features).map(|_| rng.random()).collect(),
            weight: rng.random(),
            std: rng.random_range(0.0..=spread.max(f64::MIN_POSITIVE)),
            class: f64::from(rng.random_bool(0.5)),
        })
        .collect();
    let total_weight: f64 = centroids.iter().map(|c| c.weight).sum();

    let mut names: Vec<String> = (0..n_features).map(|i| format!("f{i}")).collect();
    names.push("label".to_string());
    let rows = (0..n)
        .map(|_| {
            let mut pick = rng.random::<f64>() * total_weight;
            let mut chosen = centroids.len() - 1;
            for (i, c) in centroids.iter().enumerate() {
                pick -= c.weight;
                if pick <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            let c = &centroids[chosen];
            let mut row: Vec<f64> = c
                .center
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + z * c.std
                })
                .collect();
            row.push(c.class);
            row
        })
        .collect();
    (rows, names)
}

enum LabelTree {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<LabelTree>,
        right: Box<LabelTree>,
    },
}

impl LabelTree {
    fn random(
        rng: &mut impl Rng,
        depth: usize,
        bounds: &mut [(f64, f64)],
        max_depth: usize,
        min_depth: usize,
        leaf_prob: f64,
    ) -> LabelTree {
        if depth >= max_depth || (depth >= min_depth && rng.random::<f64>() < leaf_prob) {
            return LabelTree::Leaf(f64::from(rng.random_bool(0.5)));
        }
        let feature = rng.random_range(0..bounds.len());
        let (lo, hi) = bounds[feature];
        let threshold = rng.random_range(lo..hi);
        bounds[feature] = (lo, threshold);
        let left = Box::new(Self::random(
            rng,
            depth + 1,
            bounds,
            max_depth,
            min_depth,
            leaf_prob,
        ));
        bounds[feature] = (threshold, hi);
        let right = Box::new(Self::random(
            rng,
            depth + 1,
            bounds,
            max_depth,
            min_depth,
            leaf_prob,
        ));
        bounds[feature] = (lo, hi);
        LabelTree::Split {
            feature,
            threshold,
            left,
            right,
        }
    }

    fn label(&self, x: &[f64]) -> f64 {
        match self {
            LabelTree::Leaf(l) => *l,
            LabelTree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] < *threshold {
                    left.label(x)
                } else {
                    right.label(x)
                }
            }
        }
    }
}

fn random_tree(rng: &mut impl Rng, n: usize, n_features: usize) -> (Vec<Vec<f64>>, Vec<String>) {
    let mut bounds = vec![(0.0, 1.0); n_features];
    let tree = LabelTree::random(rng, 0, &mut bounds, 5, 3, 0.15);
    let mut names: Vec<String> = (0..n_features).map(|i| format!("f{i}")).collect();
    names.push("label".to_string());
    let rows = (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..n_features).map(|_| rng.random()).collect();
            let label = tree.label(&row);
            row.push(label);
            row
        })
        .collect();
    (rows, names)
}

fn gaussian_blobs(
    rng: &mut impl Rng,
    n: usize,
    n_blobs: usize,
    n_features: usize,
    separation: f64,
) -> (Vec<Vec<f64>>, Vec<String>) {
    let centers: Vec<Vec<f64>> = (0..n_blobs.max(1))
        .map(|_| {
            (0..n_features)
                .map(|_| rng.random_range(-separation..=separation))
                .collect()
        })
        .collect();
    let mut names: Vec<String> = (0..n_features).map(|i| format!("f{i}")).collect();
    names.push("label".to_string());
    let rows = (0..n)
        .map(|_| {
            let blob = rng.random_range(0..centers.len());
            let mut row: Vec<f64> = centers[blob]
                .iter()
                .map(|&m| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + z
                })
                .collect();
            row.push((blob % 2) as f64);
            row
        })
        .collect();
    (rows, names)
}
