//! Synthetic drifting-stream factory: base tabular generators, perturbation
//! protocols with ground-truth feature labels, drifting Bayesian networks,
//! and a sensor-fault monitoring stream.

pub mod base;
pub mod bayes;
pub mod perturb;
pub mod sensor;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;

pub use base::{gen_base, BaseKind};
pub use bayes::{gen_bayes_net, BayesNetSpec, DriftClass, DriftMode, NetMode, NodeSpec};
pub use perturb::{perturb, shuffle_baseline, PerturbKind};
pub use sensor::gen_sensor_fault;

/// Structured description of how a stream was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub perturbation: Option<String>,
    pub seed: u64,
    pub detail: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(generator: impl Into<String>, seed: u64) -> Self {
        Provenance {
            generator: generator.into(),
            perturbation: None,
            seed,
            detail: BTreeMap::new(),
        }
    }
}

/// A synthetic stream with ground-truth drift labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledStream {
    pub dataset: Dataset,
    /// Ground truth: which feature columns drift.
    pub drifting_features: Vec<bool>,
    pub change_point: Option<f64>,
    /// Alternative truth for Bayesian-network streams: only directly
    /// affected nodes and their parents count as drifting.
    pub shallow_drifting: Option<Vec<bool>>,
    pub provenance: Provenance,
}

impl LabeledStream {
    pub fn n_drifting(&self) -> usize {
        self.drifting_features.iter().filter(|&&b| b).count()
    }
}

/// Uniform time grid on `[0, 1]` for `n` samples.
pub(crate) fn time_grid(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}
