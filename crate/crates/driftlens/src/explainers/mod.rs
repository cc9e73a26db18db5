//! Explanation pipeline: fit a time model, group the stream by drift
//! localization or segmentation, then run the requested explainers and
//! bundle their reports.

pub mod counterfactual;
pub mod importance;
pub mod ipfi;
pub mod surrogate;

use serde::{Deserialize, Serialize};

use crate::data::{embed_dataset, Dataset, TimeEmbedding};
use crate::error::{DriftError, Result};
use crate::localization::{localize_with_models, LocusReport, Region, ThetaSpec};
use crate::models::{
    fit_moment_forest, fit_moment_tree, fit_prob_classifier, ClassifierKind, FitConfig, TimeModel,
};
use crate::prototypes::{
    build_prototypes, GroupId, Grouping, MetricKind, ModelContext, PrototypeSet,
};
use crate::seed;
use crate::segmentation::{
    calibrate_flag_threshold, flag_drifting_segments, segment, Segmentation,
};
use crate::stream::{run_ipfi_stream, StreamModelKind, StreamProtocol, StreamResult};

pub use counterfactual::{nearest_counterfactual, Counterfactual, CounterfactualMetric};
pub use importance::{
    permutation_importance, permutation_importance_out_of_fold, ImportanceMethod, ImportanceReport,
    Metric, Targets,
};
pub use ipfi::{IpfiState, IpfiTarget};
pub use surrogate::{local_surrogate, LocalSurrogate};

/// How the stream is grouped before explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GroupingPlan {
    Localize {
        change_point: f64,
        folds: usize,
        theta: ThetaSpec,
    },
    Segment {
        embedding: TimeEmbedding,
        /// Flag threshold for drifting segments; `None` calibrates on
        /// time-shuffled nulls.
        flag_threshold: Option<f64>,
    },
}

/// Explanation methods that can be requested in a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Pfi,
    ModelFi,
    Ipfi,
    Prototypes,
    Surrogate,
    Counterfactuals,
}

impl std::str::FromStr for MethodKind {
    type Err = DriftError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pfi" => Ok(MethodKind::Pfi),
            "model_fi" | "fi" => Ok(MethodKind::ModelFi),
            "ipfi" => Ok(MethodKind::Ipfi),
            "prototypes" => Ok(MethodKind::Prototypes),
            "surrogate" => Ok(MethodKind::Surrogate),
            "counterfactuals" => Ok(MethodKind::Counterfactuals),
            other => Err(DriftError::UnknownKind(other.to_string())),
        }
    }
}

/// Local-surrogate hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub n_samples: usize,
    pub sigma: f64,
    /// `None` resolves to `0.75 * sqrt(n_features)`.
    pub kernel_width: Option<f64>,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams {
            n_samples: 1000,
            sigma: 0.5,
            kernel_width: None,
        }
    }
}

/// Streaming (ipfi) hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpfiParams {
    pub window: usize,
    pub refit_every: usize,
    pub reservoir_capacity: usize,
    pub gamma: f64,
    pub trace_every: usize,
}

impl Default for IpfiParams {
    fn default() -> Self {
        IpfiParams {
            window: 500,
            refit_every: 100,
            reservoir_capacity: 200,
            gamma: 0.99,
            trace_every: 0,
        }
    }
}

/// A full explanation plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodPlan {
    pub grouping: GroupingPlan,
    pub model: ClassifierKind,
    pub methods: Vec<MethodKind>,
    pub fit: FitConfig,
    pub k_per_group: usize,
    pub metric: MetricKind,
    pub pfi_repeats: usize,
    pub surrogate: SurrogateParams,
    pub ipfi: IpfiParams,
}

impl MethodPlan {
    pub fn new(grouping: GroupingPlan) -> Self {
        MethodPlan {
            grouping,
            model: ClassifierKind::Forest,
            methods: vec![MethodKind::Pfi],
            fit: FitConfig::default(),
            k_per_group: 3,
            metric: MetricKind::Euclidean,
            pfi_repeats: 5,
            surrogate: SurrogateParams::default(),
            ipfi: IpfiParams::default(),
        }
    }
}

/// A per-method failure kept alongside the successful reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodError {
    pub method: String,
    pub message: String,
}

/// Surrogate fitted at one prototype.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateRecord {
    pub group: GroupId,
    pub anchor_index: usize,
    pub surrogate: LocalSurrogate,
}

/// Counterfactual computed at one prototype.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterfactualRecord {
    pub group: GroupId,
    pub result: Counterfactual,
}

/// Grouping artifact included in the bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupingSummary {
    Locus { report: LocusReport },
    Segmentation { segmentation: Segmentation },
}

/// Everything one explanation run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplanationBundle {
    pub seed: u64,
    pub plan: MethodPlan,
    pub grouping: GroupingSummary,
    pub pfi: Option<ImportanceReport>,
    pub model_fi: Option<ImportanceReport>,
    pub ipfi: Option<ImportanceReport>,
    pub ipfi_stream: Option<StreamResult>,
    pub prototypes: Option<PrototypeSet>,
    pub surrogates: Vec<SurrogateRecord>,
    pub counterfactuals: Vec<CounterfactualRecord>,
    pub errors: Vec<MethodError>,
}

impl ExplanationBundle {
    pub fn is_partial(&self) -> bool {
        !self.errors.is_empty()
    }
}

fn record_err(errors: &mut Vec<MethodError>, method: &str, err: DriftError) {
    errors.push(MethodError {
        method: method.to_string(),
        message: err.to_string(),
    });
}

/// Seeded 75/25 train/eval split for standalone importance scoring.
fn holdout_split(n: usize, seed_value: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng_for(seed_value, seed::STREAM_SPLIT);
    order.shuffle(&mut rng);
    let eval_len = (n / 4).max(1);
    let eval = order[..eval_len].to_vec();
    let train = order[eval_len..].to_vec();
    (train, eval)
}

/// Fits the plan's moment model for segment-style scoring. Linear models
/// have no moment-regression form.
fn fit_plan_moment_model(
    ds: &Dataset,
    emb: &TimeEmbedding,
    cfg: &FitConfig,
    kind: ClassifierKind,
) -> Result<TimeModel> {
    match kind {
        ClassifierKind::Tree => fit_moment_tree(ds, emb, cfg),
        ClassifierKind::Forest => fit_moment_forest(ds, emb, cfg),
        ClassifierKind::Linear => Err(DriftError::WrongModelKind(
            "linear model has no moment-regression form; use the localize grouping",
        )),
    }
}

/// Dominant time half of a segment's occurrence histogram.
fn dominant_half(histogram: &[u64]) -> Region {
    let half = histogram.len() / 2;
    let before: u64 = histogram[..half].iter().sum();
    let after: u64 = histogram[half..].iter().sum();
    if before > after {
        Region::Before
    } else {
        Region::After
    }
}

/// Runs the full explanation pipeline: group, fit, explain, bundle.
///
/// Grouping failures abort; individual explainer failures are recorded in
/// the bundle's error list and the remaining reports are still emitted.
pub fn explain_drift(ds: &Dataset, plan: &MethodPlan) -> Result<ExplanationBundle> {
    plan.fit.validate()?;
    let mut errors = Vec::new();

    // 1. group
    let mut locus: Option<(LocusReport, Vec<crate::localization::FoldModel>)> = None;
    let mut segmentation: Option<Segmentation> = None;
    match &plan.grouping {
        GroupingPlan::Localize {
            change_point,
            folds,
            theta,
        } => {
            locus = Some(localize_with_models(
                ds,
                *change_point,
                &plan.fit,
                *folds,
                plan.model,
                *theta,
            )?);
        }
        GroupingPlan::Segment {
            embedding,
            flag_threshold,
        } => {
            let threshold = match flag_threshold {
                Some(t) => *t,
                None => calibrate_flag_threshold(ds, embedding, &plan.fit, 10, 0.95)?,
            };
            let seg = segment(ds, embedding, &plan.fit)?;
            segmentation = Some(flag_drifting_segments(seg, threshold));
        }
    }

    // classifier over the full data for surrogates and drift-aware metrics
    let full_classifier: Option<TimeModel> = match (&plan.grouping, &locus) {
        (GroupingPlan::Localize { change_point, .. }, Some(_)) => {
            let labels = ds.labels_at(*change_point);
            match fit_prob_classifier(ds, &labels, &plan.fit, plan.model) {
                Ok(m) => Some(m),
                Err(e) => {
                    record_err(&mut errors, "full_model", e);
                    None
                }
            }
        }
        _ => None,
    };

    let rows = ds.feature_rows();
    let mut pfi = None;
    let mut model_fi = None;
    let mut ipfi_report = None;
    let mut ipfi_stream = None;
    let mut prototypes: Option<PrototypeSet> = None;
    let mut surrogates = Vec::new();
    let mut counterfactuals = Vec::new();

    let needs_prototypes = plan.methods.iter().any(|m| {
        matches!(
            m,
            MethodKind::Prototypes | MethodKind::Surrogate | MethodKind::Counterfactuals
        )
    });
    if needs_prototypes {
        let built = match (&locus, &segmentation) {
            (Some((report, _)), _) => {
                let ctx = match &full_classifier {
                    Some(m) => ModelContext::Classifier(m),
                    None => ModelContext::None,
                };
                build_prototypes(
                    ds,
                    &Grouping::Locus(report),
                    plan.k_per_group,
                    plan.metric,
                    ctx,
                    plan.fit.seed,
                )
            }
            (_, Some(seg)) => build_prototypes(
                ds,
                &Grouping::Segments(seg),
                plan.k_per_group,
                plan.metric,
                ModelContext::Segments(seg),
                plan.fit.seed,
            ),
            _ => unreachable!("one grouping is always built"),
        };
        match built {
            Ok(set) => prototypes = Some(set),
            Err(e) => record_err(&mut errors, "prototypes", e),
        }
    }

    for method in &plan.methods {
        match method {
            MethodKind::Pfi => {
                let result = match (&locus, &segmentation) {
                    (Some((report, fold_models)), _) => {
                        let labels = ds.labels_at(report.change_point);
                        permutation_importance_out_of_fold(
                            fold_models,
                            &rows,
                            &labels,
                            plan.pfi_repeats,
                            plan.fit.seed,
                        )
                    }
                    (_, Some(seg)) => standalone_moment_pfi(ds, seg, plan),
                    _ => unreachable!(),
                };
                match result {
                    Ok(report) => pfi = Some(report),
                    Err(e) => record_err(&mut errors, "pfi", e),
                }
            }
            MethodKind::ModelFi => {
                let result: Result<ImportanceReport> = match (&full_classifier, &segmentation) {
                    (Some(m), _) => fi_report(m),
                    (_, Some(seg)) => {
                        fit_plan_moment_model(ds, &seg.embedding, &plan.fit, plan.model)
                            .and_then(|m| fi_report(&m))
                    }
                    _ => Err(DriftError::WrongModelKind(
                        "no model for feature importance",
                    )),
                };
                match result {
                    Ok(report) => model_fi = Some(report),
                    Err(e) => record_err(&mut errors, "model_fi", e),
                }
            }
            MethodKind::Ipfi => {
                let embedding = match &plan.grouping {
                    GroupingPlan::Segment { embedding, .. } => *embedding,
                    GroupingPlan::Localize { .. } => TimeEmbedding::Fourier {
                        degree: 5,
                        period: 1.0,
                    },
                };
                let proto = StreamProtocol {
                    embedding,
                    model: match plan.model {
                        ClassifierKind::Tree => StreamModelKind::Tree,
                        _ => StreamModelKind::Forest,
                    },
                    window: plan.ipfi.window,
                    refit_every: plan.ipfi.refit_every,
                    reservoir_capacity: plan.ipfi.reservoir_capacity,
                    gamma: plan.ipfi.gamma,
                    trace_every: plan.ipfi.trace_every,
                };
                match run_ipfi_stream(ds, &plan.fit, &proto) {
                    Ok(result) => {
                        ipfi_report = Some(ImportanceReport::from_scores(
                            result.stream_sums.clone(),
                            ImportanceMethod::Ipfi,
                        ));
                        ipfi_stream = Some(result);
                    }
                    Err(e) => record_err(&mut errors, "ipfi", e),
                }
            }
            MethodKind::Prototypes => {} // built above
            MethodKind::Surrogate => {
                let Some(set) = &prototypes else {
                    continue;
                };
                let Some(classifier) = &full_classifier else {
                    record_err(
                        &mut errors,
                        "surrogate",
                        DriftError::WrongModelKind(
                            "local surrogates need the localize grouping's classifier",
                        ),
                    );
                    continue;
                };
                let stds = ds.feature_stds();
                let kernel_width = plan
                    .surrogate
                    .kernel_width
                    .unwrap_or(0.75 * (ds.n_features() as f64).sqrt());
                for (group, entry) in set.entries() {
                    match local_surrogate(
                        classifier,
                        &entry.prototype,
                        &stds,
                        plan.surrogate.n_samples,
                        plan.surrogate.sigma,
                        kernel_width,
                        seed::mix(plan.fit.seed, entry.anchor_index as u64),
                    ) {
                        Ok(s) => surrogates.push(SurrogateRecord {
                            group: *group,
                            anchor_index: entry.anchor_index,
                            surrogate: s,
                        }),
                        Err(e) => record_err(&mut errors, "surrogate", e),
                    }
                }
            }
            MethodKind::Counterfactuals => {
                let Some(set) = &prototypes else {
                    continue;
                };
                match (&locus, &segmentation) {
                    (Some((report, _)), _) => {
                        for (group, entry) in set.entries() {
                            match nearest_counterfactual(
                                ds,
                                report,
                                entry.anchor_index,
                                &CounterfactualMetric::Euclidean,
                            ) {
                                Ok(result) => counterfactuals.push(CounterfactualRecord {
                                    group: *group,
                                    result,
                                }),
                                Err(e) => record_err(&mut errors, "counterfactuals", e),
                            }
                        }
                    }
                    (_, Some(seg)) => {
                        segment_counterfactuals(ds, seg, set, &mut counterfactuals, &mut errors);
                    }
                    _ => unreachable!(),
                }
            }
        }
    }

    let grouping = match (locus, segmentation) {
        (Some((report, _)), _) => GroupingSummary::Locus { report },
        (_, Some(segmentation)) => GroupingSummary::Segmentation { segmentation },
        _ => unreachable!(),
    };
    Ok(ExplanationBundle {
        seed: plan.fit.seed,
        plan: plan.clone(),
        grouping,
        pfi,
        model_fi,
        ipfi: ipfi_report,
        ipfi_stream,
        prototypes,
        surrogates,
        counterfactuals,
        errors,
    })
}

fn fi_report(m: &TimeModel) -> Result<ImportanceReport> {
    match m.model_feature_importance() {
        Ok(scores) => Ok(ImportanceReport::from_scores(
            scores,
            ImportanceMethod::ModelFi,
        )),
        Err(_) => {
            let weights = m.linear_weights()?;
            Ok(ImportanceReport::from_scores(
                weights.iter().map(|w| w.abs()).collect(),
                ImportanceMethod::LinearWeights,
            ))
        }
    }
}

/// Standalone PFI for segment groupings: fit the plan's moment model on a
/// seeded 75% split and score permutations on the held-out quarter.
fn standalone_moment_pfi(
    ds: &Dataset,
    seg: &Segmentation,
    plan: &MethodPlan,
) -> Result<ImportanceReport> {
    let (train_idx, eval_idx) = holdout_split(ds.len(), plan.fit.seed);
    let train = ds.subset(&train_idx)?;
    let eval = ds.subset(&eval_idx)?;
    let model = fit_plan_moment_model(&train, &seg.embedding, &plan.fit, plan.model)?;
    let eval_rows = eval.feature_rows();
    let eval_targets = embed_dataset(&eval, &seg.embedding);
    permutation_importance(
        &model,
        &eval_rows,
        Targets::Moments(&eval_targets),
        Metric::NegMse,
        plan.pfi_repeats,
        plan.fit.seed,
    )
}

/// Counterfactuals under a segmentation, reduced to before/after by each
/// flagged segment's dominant time half. Cross-half targets only; segments
/// with no complement produce per-prototype errors.
fn segment_counterfactuals(
    ds: &Dataset,
    seg: &Segmentation,
    set: &PrototypeSet,
    out: &mut Vec<CounterfactualRecord>,
    errors: &mut Vec<MethodError>,
) {
    let mut dominant: std::collections::BTreeMap<u64, Region> = std::collections::BTreeMap::new();
    for (&id, info) in &seg.segments {
        if info.drift_flag {
            dominant.insert(id, dominant_half(&info.time_histogram));
        }
    }
    for (group, entry) in set.entries() {
        let GroupId::Segment { id } = group else {
            continue;
        };
        let Some(&own_half) = dominant.get(id) else {
            continue;
        };
        let target_half = match own_half {
            Region::Before => Region::After,
            Region::After => Region::Before,
            Region::NotDrifting => continue,
        };
        let anchor = &ds.samples()[entry.anchor_index].features;
        let mut best: Option<(f64, usize)> = None;
        for (i, sample) in ds.samples().iter().enumerate() {
            if i == entry.anchor_index {
                continue;
            }
            let seg_id = seg.assignments[i];
            if dominant.get(&seg_id) != Some(&target_half) {
                continue;
            }
            let d = anchor
                .iter()
                .zip(&sample.features)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        match best {
            Some((distance, counterfactual_index)) => out.push(CounterfactualRecord {
                group: *group,
                result: Counterfactual {
                    original_index: entry.anchor_index,
                    counterfactual_index,
                    distance,
                    original_region: own_half,
                    target_region: target_half,
                },
            }),
            None => errors.push(MethodError {
                method: "counterfactuals".to_string(),
                message: format!("{}: {}", group, DriftError::NoTargetSamples),
            }),
        }
    }
}
