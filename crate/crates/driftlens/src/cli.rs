//! Command-line interface: generate / localize / segment / prototypes /
//! explain / eval, file formats, and exit-code mapping.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::{load_csv, write_csv, TimeEmbedding};
use crate::error::{DriftError, Result};
use crate::evaluation::{run_grid, summarize, write_records_csv, GridSpec};
use crate::explainers::{
    explain_drift, ExplanationBundle, GroupingPlan, MethodKind, MethodPlan, SurrogateParams,
};
use crate::generators::{
    gen_base, gen_bayes_net, gen_sensor_fault, perturb, shuffle_baseline, BaseKind, BayesNetSpec,
    LabeledStream, NetMode, PerturbKind,
};
use crate::localization::{localize, scan_change_point, LocusReport, Region, ThetaSpec};
use crate::models::{fit_prob_classifier, ClassifierKind, FitConfig, TimeModel};
use crate::prototypes::{
    build_prototypes, GroupId, Grouping, MetricKind, ModelContext, PrototypeSet,
};
use crate::segmentation::{
    calibrate_flag_threshold, flag_drifting_segments, segment, SegmentInfo, Segmentation,
};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Parser)]
#[command(
    name = "driftlens",
    about = "Explain concept drift in timestamped tabular streams",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Global seed; overrides seeds from config files.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Omit timestamps and timings so reruns are byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Machine-readable JSON errors on stderr.
    #[arg(long, global = true)]
    pub json_errors: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic stream with ground-truth drift labels.
    Generate(GenerateArgs),
    /// Localize drift at a change point: per-sample KL scores and regions.
    Localize(LocalizeArgs),
    /// Segment the stream by a moment tree over embedded time.
    Segment(SegmentArgs),
    /// Select characteristic prototypes per drift group.
    Prototypes(PrototypesArgs),
    /// Run an explanation plan and bundle the reports.
    Explain(ExplainArgs),
    /// Run the evaluation grid against generator ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Stream family: base | perturb | shuffle | bayes | sensor.
    #[arg(long, default_value = "perturb")]
    pub kind: String,
    /// Base generator (agrawal[:1-3] | mixed | random_rbf | random_tree |
    /// gaussian_blobs).
    #[arg(long, default_value = "agrawal:1")]
    pub base: String,
    /// Perturbation (zero | shift:<d> | gaussian_noise | value_permutation).
    #[arg(long, default_value = "shift:1")]
    pub perturbation: String,
    #[arg(long, default_value_t = 1)]
    pub n_features: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Standardize features before perturbing (the perturbation protocol).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub standardize: bool,
    /// Bayes mode: complete | shallow.
    #[arg(long, default_value = "complete")]
    pub mode: String,
    /// Bayes class counts direct:implicit:none, e.g. 5:15:5.
    #[arg(long, default_value = "5:15:5")]
    pub classes: String,
    #[arg(long, default_value_t = 8)]
    pub n_sensors: usize,
    /// Comma-separated fault times in (0,1).
    #[arg(long, default_value = "")]
    pub fault_times: String,
    /// Comma-separated faulted sensor indices.
    #[arg(long, default_value = "")]
    pub fault_sensors: String,
    /// Demand period in samples for the sensor stream.
    #[arg(long, default_value_t = 500)]
    pub period: usize,
    #[arg(long, default_value_t = 0)]
    pub gen_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth sidecar path.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value = "t")]
    pub time_col: String,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "t")]
    pub time_col: String,
    /// Change point in (0,1), or "scan" to grid-search one.
    #[arg(long, default_value = "0.5")]
    pub change_point: String,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// "auto" (null calibration) or a fixed numeric threshold.
    #[arg(long, default_value = "auto")]
    pub theta: String,
    #[arg(long, default_value = "forest")]
    pub model: String,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub standardize: bool,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "t")]
    pub time_col: String,
    /// poly:<d> or fourier:<d>[:<period-samples>].
    #[arg(long, default_value = "poly:5")]
    pub embedding: String,
    /// "auto" (null calibration) or a fixed TV threshold.
    #[arg(long, default_value = "auto")]
    pub threshold: String,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub standardize: bool,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrototypesArgs {
    /// Grouping artifact: a localize report or segmentation file.
    #[arg(long)]
    pub grouping: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "t")]
    pub time_col: String,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// euclidean | geodesic[:<k>:<lambda>] | forest_kernel.
    #[arg(long, default_value = "euclidean")]
    pub metric: String,
    /// Lambda override for the geodesic metric.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the full-dataset pairwise distance matrix (square CSV,
    /// no header) for external embedding tools.
    #[arg(long)]
    pub emit_distance_matrix: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Plan file (TOML).
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "t")]
    pub time_col: String,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub standardize: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for plot-ready CSV extracts.
    #[arg(long)]
    pub emit_plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Grid file (TOML).
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 8)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 5)]
    pub min_leaf: usize,
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
    #[arg(long)]
    pub feature_subsample: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub l1_strength: f64,
}

impl FitArgs {
    fn to_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            n_trees: self.n_trees,
            feature_subsample: self.feature_subsample,
            seed,
            l1_strength: self.l1_strength,
        }
    }
}

/// Exit codes: 0 success, 1 usage, 2 data error, 3 partial-failure bundle.
pub fn run(argv: Vec<String>) -> u8 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout with success status
            if e.use_stderr() {
                eprint!("{e}");
                return 1;
            }
            print!("{e}");
            return 0;
        }
    };
    if let Some(threads) = cli.threads {
        // ignore failure when a global pool already exists (tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            if cli.json_errors {
                eprintln!("{}", json!({ "error": e.to_string() }));
            } else {
                eprintln!("error: {e}");
            }
            2
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Generate(args) => cmd_generate(cli, args),
        Command::Localize(args) => cmd_localize(cli, args),
        Command::Segment(args) => cmd_segment(cli, args),
        Command::Prototypes(args) => cmd_prototypes(cli, args),
        Command::Explain(args) => cmd_explain(cli, args),
        Command::Eval(args) => cmd_eval(cli, args),
    }
}

fn effective_seed(cli: &Cli, fallback: u64) -> u64 {
    cli.seed.unwrap_or(fallback)
}

fn emit_json(path: &Path, mut value: serde_json::Value, deterministic: bool) -> Result<()> {
    if let Some(map) = value.as_object_mut() {
        map.insert("version".to_string(), json!(SCHEMA_VERSION));
        if !deterministic {
            map.insert(
                "generated_at".to_string(),
                json!(std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)),
            );
        }
    }
    std::fs::write(path, serde_json::to_string_pretty(&value)? + "\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// generate

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| DriftError::UnknownKind(p.to_string()))
        })
        .collect()
}

fn cmd_generate(cli: &Cli, args: &GenerateArgs) -> Result<u8> {
    let seed = effective_seed(cli, args.gen_seed);
    let mut standardization: Option<crate::data::StandardizationParams> = None;
    let mut maybe_standardize = |ds: crate::data::Dataset| -> crate::data::Dataset {
        if args.standardize {
            let (standardized, params) = ds.standardize();
            standardization = Some(params);
            standardized
        } else {
            ds
        }
    };
    let stream: LabeledStream = match args.kind.as_str() {
        "base" => {
            let kind: BaseKind = args.base.parse()?;
            let ds = maybe_standardize(gen_base(kind, args.n, seed)?);
            LabeledStream {
                drifting_features: vec![false; ds.n_features()],
                change_point: None,
                shallow_drifting: None,
                provenance: crate::generators::Provenance::new(args.base.clone(), seed),
                dataset: ds,
            }
        }
        "perturb" => {
            let kind: BaseKind = args.base.parse()?;
            let pk: PerturbKind = args.perturbation.parse()?;
            let ds = maybe_standardize(gen_base(kind, args.n, seed)?);
            perturb(&ds, pk, args.n_features, seed)?
        }
        "shuffle" => {
            let kind: BaseKind = args.base.parse()?;
            let ds = maybe_standardize(gen_base(kind, args.n, seed)?);
            let shuffled = shuffle_baseline(&ds, seed)?;
            LabeledStream {
                drifting_features: vec![false; shuffled.n_features()],
                change_point: None,
                shallow_drifting: None,
                provenance: crate::generators::Provenance::new("shuffle_baseline", seed),
                dataset: shuffled,
            }
        }
        "bayes" => {
            let counts: Vec<usize> = args
                .classes
                .split(':')
                .map(|p| {
                    p.parse()
                        .map_err(|_| DriftError::UnknownKind(args.classes.clone()))
                })
                .collect::<Result<_>>()?;
            if counts.len() != 3 {
                return Err(DriftError::UnknownKind(args.classes.clone()));
            }
            let spec = BayesNetSpec::random_dag(counts[0], counts[1], counts[2], 0.15, seed);
            let spec = match args.mode.as_str() {
                "complete" => spec,
                "shallow" => {
                    let mut s = spec.shallow_spec();
                    s.mode = NetMode::Shallow;
                    s
                }
                other => return Err(DriftError::UnknownKind(other.to_string())),
            };
            gen_bayes_net(&spec, args.n, seed)?
        }
        "sensor" => {
            let times: Vec<f64> = parse_list(&args.fault_times)?;
            let sensors: Vec<usize> = parse_list(&args.fault_sensors)?;
            gen_sensor_fault(args.n_sensors, args.n, &times, &sensors, args.period, seed)?
        }
        other => return Err(DriftError::UnknownKind(other.to_string())),
    };

    write_csv(&stream.dataset, &args.out, &args.time_col)?;
    if let Some(params) = &standardization {
        // sidecar recording the affine map from generator scale to the
        // standardized CSV
        let sidecar = args.out.with_extension("standardization.json");
        emit_json(&sidecar, serde_json::to_value(params)?, cli.deterministic)?;
    }
    if let Some(truth_path) = &args.truth {
        let truth = json!({
            "drifting_features": stream.drifting_features,
            "change_point": stream.change_point,
            "shallow_drifting_features": stream.shallow_drifting,
            "provenance": stream.provenance,
            "config": {
                "kind": args.kind,
                "base": args.base,
                "perturbation": args.perturbation,
                "n_features": args.n_features,
                "n": args.n,
                "standardize": args.standardize,
                "seed": seed,
            },
        });
        emit_json(truth_path, truth, cli.deterministic)?;
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// localize

fn region_str(r: Region) -> &'static str {
    match r {
        Region::Before => "before",
        Region::After => "after",
        Region::NotDrifting => "not_drifting",
    }
}

fn parse_region(s: &str) -> Result<Region> {
    match s {
        "before" => Ok(Region::Before),
        "after" => Ok(Region::After),
        "not_drifting" => Ok(Region::NotDrifting),
        other => Err(DriftError::UnknownKind(other.to_string())),
    }
}

/// The localize report's JSON shape: per-sample records plus the config echo.
pub fn locus_report_json(report: &LocusReport, config: serde_json::Value) -> serde_json::Value {
    let samples: Vec<serde_json::Value> = (0..report.len())
        .map(|i| {
            json!({
                "index": i,
                "kl": report.kl_scores[i],
                "p_after": report.p_after[i],
                "in_locus": report.in_locus[i],
                "region": region_str(report.region[i]),
            })
        })
        .collect();
    json!({
        "change_point": report.change_point,
        "prior": report.prior,
        "theta": report.theta,
        "samples": samples,
        "config": config,
    })
}

fn parse_locus_report(value: &serde_json::Value) -> Result<LocusReport> {
    let bad = || DriftError::InvalidConfig("malformed locus report".into());
    let samples = value["samples"].as_array().ok_or_else(bad)?;
    let mut kl_scores = Vec::with_capacity(samples.len());
    let mut p_after = Vec::with_capacity(samples.len());
    let mut in_locus = Vec::with_capacity(samples.len());
    let mut region = Vec::with_capacity(samples.len());
    for s in samples {
        kl_scores.push(s["kl"].as_f64().ok_or_else(bad)?);
        p_after.push(s["p_after"].as_f64().ok_or_else(bad)?);
        in_locus.push(s["in_locus"].as_bool().ok_or_else(bad)?);
        region.push(parse_region(s["region"].as_str().ok_or_else(bad)?)?);
    }
    Ok(LocusReport {
        change_point: value["change_point"].as_f64().ok_or_else(bad)?,
        prior: value["prior"].as_f64().ok_or_else(bad)?,
        theta: value["theta"].as_f64().ok_or_else(bad)?,
        kl_scores,
        p_after,
        in_locus,
        region,
    })
}

fn cmd_localize(cli: &Cli, args: &LocalizeArgs) -> Result<u8> {
    let seed = effective_seed(cli, 0);
    let (ds, _) = load_csv(&args.input, &args.time_col, args.standardize)?;
    let cfg = args.fit.to_config(seed);
    let kind: ClassifierKind = args.model.parse()?;
    let theta = match args.theta.as_str() {
        "auto" => ThetaSpec::Auto {
            n_null: 20,
            quantile: 0.95,
        },
        value => ThetaSpec::Fixed {
            value: value
                .parse()
                .map_err(|_| DriftError::UnknownKind(format!("theta {value}")))?,
        },
    };
    let change_point = match args.change_point.as_str() {
        "scan" => {
            let candidates: Vec<f64> = (1..=17).map(|i| 0.1 + i as f64 * 0.045).collect();
            let (best, _) = scan_change_point(&ds, &cfg, args.folds, kind, &candidates)?;
            best
        }
        value => value
            .parse()
            .map_err(|_| DriftError::UnknownKind(format!("change point {value}")))?,
    };
    let report = localize(&ds, change_point, &cfg, args.folds, kind, theta)?;
    let config = json!({
        "input": args.input,
        "time_col": args.time_col,
        "change_point": args.change_point,
        "folds": args.folds,
        "theta": args.theta,
        "model": args.model,
        "standardize": args.standardize,
        "fit": cfg,
    });
    emit_json(
        &args.out,
        locus_report_json(&report, config),
        cli.deterministic,
    )?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// segment

/// Parses poly:<d> | fourier:<d>[:<period-samples>]; a sample-count period
/// is converted to normalized units with the dataset length.
pub fn parse_embedding(s: &str, n_samples: usize) -> Result<TimeEmbedding> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || DriftError::UnknownKind(s.to_string());
    match parts[0] {
        "poly" | "polynomial" => {
            let degree: usize = parts.get(1).unwrap_or(&"5").parse().map_err(|_| bad())?;
            Ok(TimeEmbedding::Polynomial { degree })
        }
        "fourier" => {
            let degree: usize = parts.get(1).unwrap_or(&"5").parse().map_err(|_| bad())?;
            let period = match parts.get(2) {
                Some(p) => {
                    let samples: f64 = p.parse().map_err(|_| bad())?;
                    samples / (n_samples.max(2) - 1) as f64
                }
                None => 1.0,
            };
            Ok(TimeEmbedding::Fourier { degree, period })
        }
        "binary" => {
            let change_point: f64 = parts.get(1).unwrap_or(&"0.5").parse().map_err(|_| bad())?;
            Ok(TimeEmbedding::Binary { change_point })
        }
        _ => Err(bad()),
    }
}

#[derive(Serialize, Deserialize)]
struct SegmentRow {
    id: u64,
    size: usize,
    moment_vector: Vec<f64>,
    time_histogram: Vec<u64>,
    tv_distance: f64,
    drift_flag: bool,
}

/// Segmentation JSON shape with segments as an array of rows.
pub fn segmentation_json(
    seg: &Segmentation,
    config: serde_json::Value,
) -> Result<serde_json::Value> {
    let segments: Vec<SegmentRow> = seg
        .segments
        .iter()
        .map(|(&id, info)| SegmentRow {
            id,
            size: info.size,
            moment_vector: info.moment_vector.clone(),
            time_histogram: info.time_histogram.clone(),
            tv_distance: info.tv_distance,
            drift_flag: info.drift_flag,
        })
        .collect();
    Ok(json!({
        "kind": "segmentation",
        "embedding": seg.embedding,
        "flag_threshold": seg.flag_threshold,
        "global_histogram": seg.global_histogram,
        "assignments": seg.assignments,
        "segments": segments,
        "model": seg.model,
        "config": config,
    }))
}

fn parse_segmentation(value: &serde_json::Value) -> Result<Segmentation> {
    let bad = || DriftError::InvalidConfig("malformed segmentation file".into());
    let embedding: TimeEmbedding = serde_json::from_value(value["embedding"].clone())?;
    let model: TimeModel = serde_json::from_value(value["model"].clone())?;
    let assignments: Vec<u64> = serde_json::from_value(value["assignments"].clone())?;
    let global_histogram: Vec<u64> = serde_json::from_value(value["global_histogram"].clone())?;
    let rows: Vec<SegmentRow> = serde_json::from_value(value["segments"].clone())?;
    let flag_threshold = value["flag_threshold"].as_f64().ok_or_else(bad)?;
    let segments = rows
        .into_iter()
        .map(|r| {
            (
                r.id,
                SegmentInfo {
                    size: r.size,
                    moment_vector: r.moment_vector,
                    time_histogram: r.time_histogram,
                    tv_distance: r.tv_distance,
                    drift_flag: r.drift_flag,
                },
            )
        })
        .collect();
    Ok(Segmentation {
        assignments,
        segments,
        embedding,
        model,
        global_histogram,
        flag_threshold,
    })
}

fn cmd_segment(cli: &Cli, args: &SegmentArgs) -> Result<u8> {
    let seed = effective_seed(cli, 0);
    let (ds, _) = load_csv(&args.input, &args.time_col, args.standardize)?;
    let cfg = args.fit.to_config(seed);
    let emb = parse_embedding(&args.embedding, ds.len())?;
    let threshold = match args.threshold.as_str() {
        "auto" => calibrate_flag_threshold(&ds, &emb, &cfg, 10, 0.95)?,
        value => value
            .parse()
            .map_err(|_| DriftError::UnknownKind(format!("threshold {value}")))?,
    };
    let seg = segment(&ds, &emb, &cfg)?;
    let seg = flag_drifting_segments(seg, threshold);
    let config = json!({
        "input": args.input,
        "time_col": args.time_col,
        "embedding": args.embedding,
        "threshold": args.threshold,
        "standardize": args.standardize,
        "fit": cfg,
    });
    emit_json(
        &args.out,
        segmentation_json(&seg, config)?,
        cli.deterministic,
    )?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// prototypes

pub fn parse_metric(s: &str, lambda_override: Option<f64>) -> Result<MetricKind> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || DriftError::UnknownKind(s.to_string());
    match parts[0] {
        "euclidean" => Ok(MetricKind::Euclidean),
        "geodesic" => {
            let k_neighbors: usize = parts.get(1).unwrap_or(&"10").parse().map_err(|_| bad())?;
            let lambda: f64 = match lambda_override {
                Some(l) => l,
                None => parts.get(2).unwrap_or(&"1.0").parse().map_err(|_| bad())?,
            };
            Ok(MetricKind::DriftGeodesic {
                k_neighbors,
                lambda,
            })
        }
        "forest_kernel" => Ok(MetricKind::ForestKernel),
        _ => Err(bad()),
    }
}

fn group_str(g: &GroupId) -> String {
    match g {
        GroupId::Region { region } => format!("region:{}", region_str(*region)),
        GroupId::Segment { id } => format!("segment:{id}"),
    }
}

pub fn prototype_set_json(set: &PrototypeSet, config: serde_json::Value) -> serde_json::Value {
    let groups: Vec<serde_json::Value> = set
        .groups
        .iter()
        .map(|(id, entries)| {
            json!({
                "group": group_str(id),
                "prototypes": entries.iter().map(|e| json!({
                    "prototype": e.prototype,
                    "anchor_index": e.anchor_index,
                    "member_indices": e.member_indices,
                    "occurrence_profile": e.occurrence_profile,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "groups": groups,
        "warnings": set.warnings,
        "config": config,
    })
}

fn cmd_prototypes(cli: &Cli, args: &PrototypesArgs) -> Result<u8> {
    let grouping_text = std::fs::read_to_string(&args.grouping)?;
    let grouping_value: serde_json::Value = serde_json::from_str(&grouping_text)?;
    let metric = parse_metric(&args.metric, args.lambda)?;
    let seed = effective_seed(cli, 0);

    let is_segmentation = grouping_value["kind"].as_str() == Some("segmentation");
    let standardize = grouping_value["config"]["standardize"]
        .as_bool()
        .unwrap_or(true);
    let (ds, _) = load_csv(&args.input, &args.time_col, standardize)?;

    let emit_matrix = |ctx: ModelContext| -> Result<()> {
        let Some(path) = &args.emit_distance_matrix else {
            return Ok(());
        };
        let rows = ds.feature_rows();
        let matrix = crate::prototypes::pairwise_drift_distance(&rows, ctx, metric)?;
        let mut out = String::new();
        for i in 0..matrix.n() {
            let row: Vec<String> = (0..matrix.n())
                .map(|j| format!("{}", matrix.get(i, j)))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    };

    let set = if is_segmentation {
        let seg = parse_segmentation(&grouping_value)?;
        emit_matrix(ModelContext::Segments(&seg))?;
        build_prototypes(
            &ds,
            &Grouping::Segments(&seg),
            args.k,
            metric,
            ModelContext::Segments(&seg),
            seed,
        )?
    } else {
        let report = parse_locus_report(&grouping_value)?;
        if report.len() != ds.len() {
            return Err(DriftError::MismatchedDataset {
                expected: report.len(),
                got: ds.len(),
            });
        }
        // drift-aware metrics need the classifier back; refit it from the
        // report's config echo (deterministic under the recorded seed)
        let needs_model = !matches!(metric, MetricKind::Euclidean);
        let classifier: Option<TimeModel> = if needs_model {
            let fit: FitConfig = serde_json::from_value(grouping_value["config"]["fit"].clone())?;
            let kind: ClassifierKind = grouping_value["config"]["model"]
                .as_str()
                .unwrap_or("forest")
                .parse()?;
            let labels = ds.labels_at(report.change_point);
            Some(fit_prob_classifier(&ds, &labels, &fit, kind)?)
        } else {
            None
        };
        let ctx = match &classifier {
            Some(m) => ModelContext::Classifier(m),
            None => ModelContext::None,
        };
        emit_matrix(ctx)?;
        build_prototypes(&ds, &Grouping::Locus(&report), args.k, metric, ctx, seed)?
    };

    let config = json!({
        "grouping": args.grouping,
        "input": args.input,
        "k": args.k,
        "metric": args.metric,
        "lambda": args.lambda,
        "seed": seed,
    });
    emit_json(
        &args.out,
        prototype_set_json(&set, config),
        cli.deterministic,
    )?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// explain

#[derive(Debug, Deserialize)]
struct PlanFile {
    plan: PlanSection,
}

#[derive(Debug, Deserialize)]
struct PlanSection {
    grouping: String,
    #[serde(default = "default_change_point")]
    change_point: f64,
    #[serde(default = "default_folds")]
    folds: usize,
    #[serde(default)]
    theta: Option<toml::Value>,
    #[serde(default = "default_embedding")]
    embedding: String,
    #[serde(default)]
    flag_threshold: Option<f64>,
    #[serde(default = "default_model")]
    model: String,
    methods: Vec<String>,
    #[serde(default = "default_k")]
    k_per_group: usize,
    #[serde(default = "default_metric")]
    metric: String,
    #[serde(default = "default_repeats")]
    pfi_repeats: usize,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    fit: Option<FitSection>,
    #[serde(default)]
    surrogate: Option<SurrogateSection>,
    #[serde(default)]
    ipfi: Option<IpfiSection>,
}

fn default_change_point() -> f64 {
    0.5
}
fn default_folds() -> usize {
    10
}
fn default_embedding() -> String {
    "poly:5".to_string()
}
fn default_model() -> String {
    "forest".to_string()
}
fn default_k() -> usize {
    3
}
fn default_metric() -> String {
    "euclidean".to_string()
}
fn default_repeats() -> usize {
    5
}

#[derive(Debug, Deserialize)]
struct FitSection {
    max_depth: Option<usize>,
    min_leaf: Option<usize>,
    n_trees: Option<usize>,
    feature_subsample: Option<f64>,
    l1_strength: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct SurrogateSection {
    n_samples: Option<usize>,
    sigma: Option<f64>,
    kernel_width: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct IpfiSection {
    window: Option<usize>,
    refit_every: Option<usize>,
    reservoir_capacity: Option<usize>,
    gamma: Option<f64>,
    trace_every: Option<usize>,
}

/// Parses a plan file into a [`MethodPlan`] for the given dataset size.
pub fn parse_plan(text: &str, n_samples: usize, seed_override: Option<u64>) -> Result<MethodPlan> {
    let file: PlanFile =
        toml::from_str(text).map_err(|e| DriftError::InvalidConfig(format!("plan: {e}")))?;
    let p = file.plan;
    let seed = seed_override.or(p.seed).unwrap_or(0);

    let theta = match &p.theta {
        None => ThetaSpec::default(),
        Some(toml::Value::String(s)) if s == "auto" => ThetaSpec::default(),
        Some(toml::Value::Float(f)) => ThetaSpec::Fixed { value: *f },
        Some(toml::Value::Integer(i)) => ThetaSpec::Fixed { value: *i as f64 },
        Some(other) => return Err(DriftError::InvalidConfig(format!("plan theta: {other}"))),
    };
    let grouping = match p.grouping.as_str() {
        "localize" => GroupingPlan::Localize {
            change_point: p.change_point,
            folds: p.folds,
            theta,
        },
        "segment" => GroupingPlan::Segment {
            embedding: parse_embedding(&p.embedding, n_samples)?,
            flag_threshold: p.flag_threshold,
        },
        other => return Err(DriftError::UnknownKind(format!("grouping {other}"))),
    };

    let mut fit = FitConfig {
        seed,
        ..FitConfig::default()
    };
    if let Some(f) = &p.fit {
        if let Some(v) = f.max_depth {
            fit.max_depth = v;
        }
        if let Some(v) = f.min_leaf {
            fit.min_leaf = v;
        }
        if let Some(v) = f.n_trees {
            fit.n_trees = v;
        }
        if let Some(v) = f.feature_subsample {
            fit.feature_subsample = Some(v);
        }
        if let Some(v) = f.l1_strength {
            fit.l1_strength = v;
        }
    }

    let mut surrogate = SurrogateParams::default();
    if let Some(s) = &p.surrogate {
        if let Some(v) = s.n_samples {
            surrogate.n_samples = v;
        }
        if let Some(v) = s.sigma {
            surrogate.sigma = v;
        }
        if s.kernel_width.is_some() {
            surrogate.kernel_width = s.kernel_width;
        }
    }
    let mut ipfi = crate::explainers::IpfiParams::default();
    if let Some(s) = &p.ipfi {
        if let Some(v) = s.window {
            ipfi.window = v;
        }
        if let Some(v) = s.refit_every {
            ipfi.refit_every = v;
        }
        if let Some(v) = s.reservoir_capacity {
            ipfi.reservoir_capacity = v;
        }
        if let Some(v) = s.gamma {
            ipfi.gamma = v;
        }
        if let Some(v) = s.trace_every {
            ipfi.trace_every = v;
        }
    }

    let methods: Vec<MethodKind> = p.methods.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    Ok(MethodPlan {
        grouping,
        model: p.model.parse()?,
        methods,
        fit,
        k_per_group: p.k_per_group,
        metric: parse_metric(&p.metric, None)?,
        pfi_repeats: p.pfi_repeats,
        surrogate,
        ipfi,
    })
}

fn write_plot_data(bundle: &ExplanationBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let write_scores = |name: &str, report: &crate::explainers::ImportanceReport| -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(name))?;
        w.write_record(["feature", "score", "standard_error"])?;
        for (j, (s, se)) in report
            .scores
            .iter()
            .zip(&report.standard_errors)
            .enumerate()
        {
            w.write_record([&j.to_string(), &format!("{s}"), &format!("{se}")])?;
        }
        w.flush()?;
        Ok(())
    };
    if let Some(r) = &bundle.pfi {
        write_scores("pfi.csv", r)?;
    }
    if let Some(r) = &bundle.model_fi {
        write_scores("model_fi.csv", r)?;
    }
    if let Some(r) = &bundle.ipfi {
        write_scores("ipfi.csv", r)?;
    }
    if let Some(stream) = &bundle.ipfi_stream {
        let mut w = csv::Writer::from_path(dir.join("ipfi_trace.csv"))?;
        w.write_record(["at", "feature", "score"])?;
        for point in &stream.trace {
            for (j, s) in point.scores.iter().enumerate() {
                w.write_record([&point.at.to_string(), &j.to_string(), &format!("{s}")])?;
            }
        }
        w.flush()?;
    }
    if let Some(set) = &bundle.prototypes {
        let mut w = csv::Writer::from_path(dir.join("occurrence.csv"))?;
        w.write_record(["group", "prototype", "bin", "count"])?;
        for (gid, entries) in &set.groups {
            for (p, entry) in entries.iter().enumerate() {
                for (bin, count) in entry.occurrence_profile.iter().enumerate() {
                    w.write_record([
                        group_str(gid).as_str(),
                        &p.to_string(),
                        &bin.to_string(),
                        &count.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
    }
    if !bundle.counterfactuals.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("counterfactuals.csv"))?;
        w.write_record([
            "group",
            "original_index",
            "counterfactual_index",
            "distance",
            "original_region",
            "target_region",
        ])?;
        for record in &bundle.counterfactuals {
            w.write_record([
                group_str(&record.group).as_str(),
                &record.result.original_index.to_string(),
                &record.result.counterfactual_index.to_string(),
                &format!("{}", record.result.distance),
                region_str(record.result.original_region),
                region_str(record.result.target_region),
            ])?;
        }
        w.flush()?;
    }
    if !bundle.surrogates.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("surrogates.csv"))?;
        w.write_record(["group", "anchor_index", "feature", "coefficient"])?;
        for record in &bundle.surrogates {
            for (j, c) in record.surrogate.coefficients.iter().enumerate() {
                w.write_record([
                    group_str(&record.group).as_str(),
                    &record.anchor_index.to_string(),
                    &j.to_string(),
                    &format!("{c}"),
                ])?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_explain(cli: &Cli, args: &ExplainArgs) -> Result<u8> {
    let plan_text = std::fs::read_to_string(&args.plan)?;
    let (ds, _) = load_csv(&args.input, &args.time_col, args.standardize)?;
    let plan = parse_plan(&plan_text, ds.len(), cli.seed)?;
    let bundle = explain_drift(&ds, &plan)?;
    let partial = bundle.is_partial();
    let mut value = serde_json::to_value(&bundle)?;
    if let Some(map) = value.as_object_mut() {
        map.insert(
            "input".to_string(),
            json!({ "path": args.input, "time_col": args.time_col, "standardize": args.standardize }),
        );
    }
    emit_json(&args.out, value, cli.deterministic)?;
    if let Some(dir) = &args.emit_plot_data {
        write_plot_data(&bundle, dir)?;
    }
    Ok(if partial { 3 } else { 0 })
}

// ---------------------------------------------------------------------------
// eval

#[derive(Debug, Deserialize)]
struct GridFile {
    grid: GridSection,
}

#[derive(Debug, Deserialize)]
struct GridSection {
    generators: Vec<String>,
    #[serde(default = "default_perturbations")]
    perturbations: Vec<String>,
    #[serde(default = "default_n_features")]
    n_features: Vec<usize>,
    #[serde(default = "default_models")]
    models: Vec<String>,
    #[serde(default = "default_methods")]
    methods: Vec<String>,
    #[serde(default = "default_grid_repeats")]
    repeats: usize,
    #[serde(default = "default_grid_n")]
    n: usize,
    #[serde(default)]
    seed: u64,
}

fn default_perturbations() -> Vec<String> {
    vec!["shift:5".to_string()]
}
fn default_n_features() -> Vec<usize> {
    vec![1]
}
fn default_models() -> Vec<String> {
    vec!["forest".to_string()]
}
fn default_methods() -> Vec<String> {
    vec!["pfi".to_string()]
}
fn default_grid_repeats() -> usize {
    20
}
fn default_grid_n() -> usize {
    1000
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.grid)?;
    let file: GridFile =
        toml::from_str(&text).map_err(|e| DriftError::InvalidConfig(format!("grid: {e}")))?;
    let g = file.grid;
    let grid = GridSpec {
        generators: g.generators,
        perturbations: g.perturbations,
        n_features: g.n_features,
        models: g.models,
        methods: g.methods,
        repeats: g.repeats,
        n: g.n,
        seed: cli.seed.unwrap_or(g.seed),
    };
    let outcome = run_grid(&grid)?;
    write_records_csv(&outcome.records, &args.out, cli.deterministic)?;
    if let Some(summary_path) = &args.summary {
        let (cells, pooled) = summarize(&outcome);
        let summary = json!({
            "grid": grid,
            "cells": cells,
            "pooled": pooled,
            "failures": outcome.failures,
        });
        emit_json(summary_path, summary, cli.deterministic)?;
    }
    Ok(0)
}
