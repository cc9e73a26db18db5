//! End-to-end tests of the `driftlens` binary: format contracts between
//! subcommands, exit codes, determinism, and input immutability.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_driftlens"))
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).expect("output file exists")
}

#[test]
fn generate_then_localize_chain() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("stream.csv");
    let truth = dir.path().join("truth.json");
    let status = bin()
        .args([
            "generate",
            "--kind",
            "perturb",
            "--base",
            "gaussian_blobs",
            "--perturbation",
            "shift:5",
            "--n-features",
            "1",
            "--n",
            "240",
            "--seed",
            "7",
            "--out",
            stream.to_str().unwrap(),
            "--truth",
            truth.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    // localize consumes generate's CSV with no flags beyond --input
    let report = dir.path().join("report.json");
    let status = bin()
        .args([
            "localize",
            "--input",
            stream.to_str().unwrap(),
            "--change-point",
            "0.5",
            "--folds",
            "5",
            "--theta",
            "0.05",
            "--n-trees",
            "15",
            "--seed",
            "7",
            "--out",
            report.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let value: serde_json::Value = serde_json::from_str(&read(&report)).unwrap();
    assert!(value["change_point"].is_number());
    assert!(value["prior"].is_number());
    assert!(value["theta"].is_number());
    let samples = value["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 240);
    for s in samples.iter().take(5) {
        assert!(s["index"].is_number());
        assert!(s["kl"].is_number());
        assert!(s["in_locus"].is_boolean());
        assert!(s["region"].is_string());
    }
    assert!(value["config"].is_object());
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let output = bin().args(["localize", "--no-such-flag"]).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.to_lowercase().contains("usage") || stderr.contains("--help"));
}

#[test]
fn data_error_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,t\nx,1\n").unwrap();
    let out = dir.path().join("r.json");
    let output = bin()
        .args([
            "localize",
            "--input",
            bad.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("non-numeric"));
}

#[test]
fn json_errors_flag_emits_machine_readable_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let output = bin()
        .args([
            "localize",
            "--json-errors",
            "--input",
            dir.path().join("missing.csv").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    let parsed: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert!(parsed["error"].is_string());
}

#[test]
fn partial_explain_bundle_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("stream.csv");
    bin()
        .args([
            "generate",
            "--kind",
            "perturb",
            "--base",
            "gaussian_blobs",
            "--perturbation",
            "shift:4",
            "--n-features",
            "1",
            "--n",
            "200",
            "--seed",
            "3",
            "--out",
            stream.to_str().unwrap(),
        ])
        .status()
        .unwrap();

    // surrogates need a classifier, which the segment grouping does not
    // provide: that method fails, pfi still succeeds, exit code is 3
    let plan = dir.path().join("plan.toml");
    std::fs::write(
        &plan,
        r#"
[plan]
grouping = "segment"
embedding = "poly:2"
flag_threshold = 0.2
model = "forest"
methods = ["pfi", "surrogate"]
seed = 3

[plan.fit]
n_trees = 10
max_depth = 4
"#,
    )
    .unwrap();
    let bundle_path = dir.path().join("bundle.json");
    let output = bin()
        .args([
            "explain",
            "--plan",
            plan.to_str().unwrap(),
            "--input",
            stream.to_str().unwrap(),
            "--out",
            bundle_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        output.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let bundle: serde_json::Value = serde_json::from_str(&read(&bundle_path)).unwrap();
    assert!(bundle["pfi"].is_object(), "pfi report still present");
    assert!(!bundle["errors"].as_array().unwrap().is_empty());
}

#[test]
fn deterministic_flag_makes_reruns_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |suffix: &str| -> (String, String) {
        let stream = dir.path().join(format!("s{suffix}.csv"));
        let truth = dir.path().join(format!("t{suffix}.json"));
        bin()
            .args([
                "generate",
                "--deterministic",
                "--kind",
                "perturb",
                "--base",
                "mixed",
                "--perturbation",
                "zero",
                "--n-features",
                "1",
                "--n",
                "150",
                "--seed",
                "11",
                "--out",
                stream.to_str().unwrap(),
                "--truth",
                truth.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        (read(&stream), read(&truth))
    };
    let (csv_a, truth_a) = run("a");
    let (csv_b, truth_b) = run("b");
    assert_eq!(csv_a, csv_b);
    assert_eq!(truth_a, truth_b);
}

#[test]
fn deterministic_eval_reruns_identical_and_columns_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.toml");
    std::fs::write(
        &grid,
        r#"
[grid]
generators = ["gaussian_blobs"]
perturbations = ["shift:4"]
n_features = [1]
models = ["tree"]
methods = ["pfi", "fi"]
repeats = 2
n = 150
seed = 5
"#,
    )
    .unwrap();
    let run = |suffix: &str| -> String {
        let out = dir.path().join(format!("results{suffix}.csv"));
        let summary = dir.path().join(format!("summary{suffix}.json"));
        let status = bin()
            .args([
                "eval",
                "--deterministic",
                "--grid",
                grid.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--summary",
                summary.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        read(&out)
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let header = a.lines().next().unwrap();
    assert_eq!(
        header,
        "generator,perturbation,k,model,method,seed,auc,runtime_ms"
    );
    assert_eq!(a.lines().count(), 1 + 4); // header + 2 methods x 2 repeats
}

#[test]
fn inputs_never_mutated() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("stream.csv");
    bin()
        .args([
            "generate",
            "--kind",
            "perturb",
            "--base",
            "gaussian_blobs",
            "--perturbation",
            "shift:5",
            "--n-features",
            "1",
            "--n",
            "160",
            "--seed",
            "2",
            "--out",
            stream.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    let before = read(&stream);

    let seg = dir.path().join("seg.json");
    bin()
        .args([
            "segment",
            "--input",
            stream.to_str().unwrap(),
            "--embedding",
            "poly:2",
            "--threshold",
            "0.2",
            "--n-trees",
            "10",
            "--max-depth",
            "3",
            "--out",
            seg.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    let protos = dir.path().join("protos.json");
    let status = bin()
        .args([
            "prototypes",
            "--grouping",
            seg.to_str().unwrap(),
            "--input",
            stream.to_str().unwrap(),
            "--k",
            "2",
            "--metric",
            "euclidean",
            "--out",
            protos.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(before, read(&stream), "input file changed");

    let set: serde_json::Value = serde_json::from_str(&read(&protos)).unwrap();
    assert!(set["groups"].is_array());
}

#[test]
fn prototypes_from_locus_grouping_with_geodesic() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("stream.csv");
    bin()
        .args([
            "generate",
            "--kind",
            "perturb",
            "--base",
            "gaussian_blobs",
            "--perturbation",
            "shift:6",
            "--n-features",
            "1",
            "--n",
            "200",
            "--seed",
            "9",
            "--out",
            stream.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    let report = dir.path().join("report.json");
    bin()
        .args([
            "localize",
            "--input",
            stream.to_str().unwrap(),
            "--change-point",
            "0.5",
            "--folds",
            "5",
            "--theta",
            "0.02",
            "--n-trees",
            "15",
            "--seed",
            "9",
            "--out",
            report.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    let protos = dir.path().join("protos.json");
    let status = bin()
        .args([
            "prototypes",
            "--grouping",
            report.to_str().unwrap(),
            "--input",
            stream.to_str().unwrap(),
            "--k",
            "2",
            "--metric",
            "geodesic",
            "--lambda",
            "1.0",
            "--out",
            protos.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let set: serde_json::Value = serde_json::from_str(&read(&protos)).unwrap();
    let groups = set["groups"].as_array().unwrap();
    assert!(!groups.is_empty());
    for g in groups {
        let name = g["group"].as_str().unwrap();
        assert!(name.starts_with("region:"));
    }
}

#[test]
fn explain_emits_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("stream.csv");
    bin()
        .args([
            "generate",
            "--kind",
            "perturb",
            "--base",
            "gaussian_blobs",
            "--perturbation",
            "shift:5",
            "--n-features",
            "1",
            "--n",
            "200",
            "--seed",
            "4",
            "--out",
            stream.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    let plan = dir.path().join("plan.toml");
    std::fs::write(
        &plan,
        r#"
[plan]
grouping = "localize"
change_point = 0.5
folds = 5
theta = 0.02
model = "forest"
methods = ["pfi", "counterfactuals"]
k_per_group = 2
seed = 4

[plan.fit]
n_trees = 12
"#,
    )
    .unwrap();
    let bundle = dir.path().join("bundle.json");
    let plots = dir.path().join("plots");
    let status = bin()
        .args([
            "explain",
            "--plan",
            plan.to_str().unwrap(),
            "--input",
            stream.to_str().unwrap(),
            "--out",
            bundle.to_str().unwrap(),
            "--emit-plot-data",
            plots.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let pfi_csv = read(plots.join("pfi.csv"));
    assert!(pfi_csv.starts_with("feature,score,standard_error"));
    let cf_csv = read(plots.join("counterfactuals.csv"));
    assert!(cf_csv.starts_with(
        "group,original_index,counterfactual_index,distance,original_region,target_region"
    ));
}

#[test]
fn generate_writes_standardization_sidecar_and_matrix_export_works() {
    let dir = tempfile::tempdir().unwrap();
    let stream = dir.path().join("stream.csv");
    bin()
        .args([
            "generate",
            "--kind",
            "perturb",
            "--base",
            "gaussian_blobs",
            "--perturbation",
            "shift:5",
            "--n-features",
            "1",
            "--n",
            "120",
            "--seed",
            "6",
            "--out",
            stream.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    let sidecar: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("stream.standardization.json"))).unwrap();
    assert!(sidecar["means"].is_array());
    assert!(sidecar["stds"].is_array());
    assert!(sidecar["constant"].is_array());

    let seg = dir.path().join("seg.json");
    bin()
        .args([
            "segment",
            "--input",
            stream.to_str().unwrap(),
            "--embedding",
            "poly:2",
            "--threshold",
            "0.2",
            "--n-trees",
            "10",
            "--max-depth",
            "3",
            "--out",
            seg.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    let protos = dir.path().join("p.json");
    let matrix = dir.path().join("dist.csv");
    let status = bin()
        .args([
            "prototypes",
            "--grouping",
            seg.to_str().unwrap(),
            "--input",
            stream.to_str().unwrap(),
            "--k",
            "2",
            "--metric",
            "geodesic",
            "--out",
            protos.to_str().unwrap(),
            "--emit-distance-matrix",
            matrix.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let matrix_text = read(&matrix);
    let rows: Vec<&str> = matrix_text.lines().collect();
    assert_eq!(rows.len(), 120);
    assert_eq!(rows[0].split(',').count(), 120);
    // diagonal zero, symmetric spot check
    let cell = |i: usize, j: usize| -> f64 { rows[i].split(',').nth(j).unwrap().parse().unwrap() };
    assert_eq!(cell(0, 0), 0.0);
    assert_eq!(cell(3, 7), cell(7, 3));
}
