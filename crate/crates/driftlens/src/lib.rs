//! Drift explanation toolkit for timestamped tabular data streams.
//!
//! The library frames "what changed in this stream?" as a modeling problem:
//! train a model to predict observation time from the data, then read the
//! drift off that model. On top of that reduction it provides
//!
//! - drift localization: per-sample KL scores against the time prior, with a
//!   null-calibrated decision threshold and before/after drift regions;
//! - drift segmentation: moment trees over embedded time targets whose
//!   leaves partition the data space into regions of homogeneous drift;
//! - explanations: permutation feature importance (batch and incremental),
//!   model feature importance, local linear surrogates, nearest-sample
//!   counterfactuals, characteristic prototypes with occurrence profiles;
//! - synthetic benchmark generators with ground-truth drift labels, and an
//!   AUC harness that scores importance rankings against that truth.

pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod explainers;
pub mod generators;
pub mod localization;
pub mod models;
pub mod prototypes;
pub mod seed;
pub mod segmentation;
pub mod stream;

pub use data::{
    embed_time, load_csv, write_csv, Dataset, StandardizationParams, TimeEmbedding, TimedSample,
};
pub use error::{DriftError, Result};
pub use models::{ClassifierKind, FitConfig, TimeModel};
