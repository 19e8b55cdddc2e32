//! Subcommands run as a user would run them, on the checked-in fixture.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use conceptkit::io::{read_matrix, write_matrix};
use conceptkit::Matrix;

const BIN: &str = env!("CARGO_BIN_EXE_conceptkit");
const ADAPTER: &str = env!("CARGO_BIN_EXE_conceptkit-echo-head");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/e2e").join(name)
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn fixture_str(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

fn extract(dir: &Path, method: &str, k: &str) {
    ok(dir, &["extract", "--activations", &fixture_str("A.npy"), "--method", method, "--k", k, "--seed", "3", "--out", "fit"]);
}

#[test]
fn extract_writes_factors_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    for method in ["kmeans", "pca", "nmf"] {
        extract(dir.path(), method, "4");
        let u: Matrix<f64> = read_matrix(dir.path().join("fit/U.npy")).unwrap();
        let v: Matrix<f64> = read_matrix(dir.path().join("fit/V.npy")).unwrap();
        assert_eq!((u.shape(), v.shape()), ((60, 4), (8, 4)));
        let meta = json(dir.path().join("fit/meta.json"));
        assert_eq!(meta["method"], method);
        assert_eq!(meta["k"], 4);
        assert_eq!(meta["seed"], 3);
        assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
        assert!(meta["iterations"].is_u64());
    }
}

#[test]
fn extract_config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"method": "kmeans", "k": 2, "seed": 11}"#).unwrap();
    let a = fixture_str("A.npy");
    ok(dir.path(), &["extract", "--activations", &a, "--config", "c.json", "--k", "3", "--out", "fit"]);
    let meta = json(dir.path().join("fit/meta.json"));
    assert_eq!((meta["method"].as_str(), meta["k"].as_u64(), meta["seed"].as_u64()), (Some("kmeans"), Some(3), Some(11)));
}

#[test]
fn missing_setting_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["extract", "--activations", &fixture_str("A.npy"), "--method", "pca", "--out", "fit"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error[usage]: missing setting 'k'"));
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["extract", "--activations", "absent/A.npy", "--method", "pca", "--k", "2", "--out", "fit"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.starts_with("error[file]: absent/A.npy"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn invalid_input_is_a_single_line_failure() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.npy"), b"not an array").unwrap();
    let out = run(dir.path(), &["extract", "--activations", "bad.npy", "--method", "pca", "--k", "2", "--out", "fit"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error[npy_magic]"));
    let out = run(dir.path(), &["verify", "--trials", "1", "--k", "9"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error[invalid_argument]"));
}

fn model_args<'a>(head: &'a str) -> Vec<&'a str> {
    vec!["--u", "fit/U.npy", "--v", "fit/V.npy", "--head", head]
}

#[test]
fn attribute_writes_importances_and_settings() {
    let dir = tempfile::tempdir().unwrap();
    extract(dir.path(), "nmf", "4");
    let head = fixture_str("head.json");
    std::fs::write(dir.path().join("cat.json"), r#"{"method": "rise", "mask-samples": 64, "seed": 5}"#).unwrap();
    let mut args = vec!["attribute"];
    args.extend(model_args(&head));
    args.extend(["--config", "cat.json", "--seed", "6", "--out", "phi.npy"]);
    ok(dir.path(), &args);
    let phi: Matrix<f64> = read_matrix(dir.path().join("phi.npy")).unwrap();
    assert_eq!(phi.shape(), (60, 4));
    let meta = json(dir.path().join("phi.json"));
    assert_eq!(meta["config"]["method"], "rise");
    assert_eq!(meta["config"]["mask-samples"], 64);
    assert_eq!(meta["config"]["seed"], 6);
    assert_eq!(meta["degenerate"].as_array().unwrap().len(), 60);
}

#[test]
fn attribute_gradient_input_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    extract(dir.path(), "pca", "3");
    let head = fixture_str("head.json");
    let mut args = vec!["attribute"];
    args.extend(model_args(&head));
    args.extend(["--method", "gradient-input", "--out", "phi.npy"]);
    ok(dir.path(), &args);
    let u: Matrix<f64> = read_matrix(dir.path().join("fit/U.npy")).unwrap();
    let v: Matrix<f64> = read_matrix(dir.path().join("fit/V.npy")).unwrap();
    let w: Matrix<f64> = read_matrix(fixture("W.npy")).unwrap();
    let phi: Matrix<f64> = read_matrix(dir.path().join("phi.npy")).unwrap();
    for i in 0..u.rows() {
        for j in 0..3 {
            let projected: f64 = (0..8).map(|f| v[(f, j)] * w[(f, 0)]).sum();
            assert!((phi[(i, j)] - u[(i, j)] * projected).abs() < 1e-9);
        }
    }
}

#[test]
fn unknown_method_is_rejected_by_the_parser() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["attribute", "--u", "U.npy", "--v", "V.npy", "--head", "h.json", "--method", "lime", "--out", "p.npy"]);
    assert_eq!(out.status.code(), Some(2));
}

fn attribute_methods(dir: &Path, head: &str, methods: &[&str]) {
    std::fs::create_dir_all(dir.join("phi")).unwrap();
    for m in methods {
        let out = format!("phi/{m}.npy");
        let mut args = vec!["attribute"];
        args.extend(model_args(head));
        args.extend(["--method", m, "--seed", "1", "--out", &out]);
        ok(dir, &args);
    }
}

#[test]
fn eval_cats_report_shape() {
    let dir = tempfile::tempdir().unwrap();
    extract(dir.path(), "nmf", "4");
    let head = fixture_str("head.json");
    attribute_methods(dir.path(), &head, &["occlusion", "saliency"]);
    let mut args = vec!["eval-cats"];
    args.extend(model_args(&head));
    args.extend(["--phi-dir", "phi", "--metrics", "deletion,insertion,mufidelity", "--out", "curves.json", "--svg", "curves.svg"]);
    ok(dir.path(), &args);
    let curves = json(dir.path().join("curves.json"));
    assert_eq!(curves["k"], 4);
    assert_eq!(curves["metrics"], serde_json::json!(["deletion", "insertion", "mufidelity"]));
    let reports = curves["reports"].as_array().unwrap();
    let names: Vec<&str> = reports.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(names, vec!["occlusion", "saliency"]);
    for r in reports {
        for metric in ["deletion", "insertion"] {
            let s = &r[metric];
            assert_eq!(s["grid"].as_array().unwrap().len(), 5);
            assert_eq!(s["mean-scores"].as_array().unwrap().len(), 5);
            assert_eq!(s["auc"].as_array().unwrap().len(), 60);
            assert!(s["mean-auc"].is_f64());
        }
        assert_eq!(r["mu-fidelity"]["subset-size"], 2);
        assert_eq!(r["mu-fidelity"]["subsets"], 200);
    }
    // occlusion is exact on an affine head, so its μFidelity is perfect
    let occlusion = reports[0]["mu-fidelity"]["mean"].as_f64().unwrap();
    assert!((occlusion - 1.0).abs() < 1e-9, "{occlusion}");
    let svg = std::fs::read_to_string(dir.path().join("curves.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 4);
}

#[test]
fn eval_cats_metric_subset() {
    let dir = tempfile::tempdir().unwrap();
    extract(dir.path(), "kmeans", "3");
    let head = fixture_str("head.json");
    attribute_methods(dir.path(), &head, &["gradient-input"]);
    let mut args = vec!["eval-cats"];
    args.extend(model_args(&head));
    args.extend(["--phi-dir", "phi", "--metrics", "insertion", "--out", "curves.json"]);
    ok(dir.path(), &args);
    let r = &json(dir.path().join("curves.json"))["reports"][0];
    assert!(r["deletion"].is_null() && r["mu-fidelity"].is_null());
    assert!(r["insertion"].is_object());
}

fn strategy_args<'a>(head: &'a str, labels: &'a str, embed: &'a str) -> Vec<&'a str> {
    let mut args = vec!["strategy", "--phi", "phi/occlusion.npy"];
    args.extend(model_args(head));
    args.extend(["--labels", labels, "--embed", embed, "--out", "graph.json", "--svg", "graph.svg"]);
    args
}

#[test]
fn strategy_outputs_for_each_embedding() {
    let dir = tempfile::tempdir().unwrap();
    extract(dir.path(), "nmf", "4");
    let head = fixture_str("head.json");
    attribute_methods(dir.path(), &head, &["occlusion"]);
    let labels = fixture_str("labels.npy");
    write_matrix(dir.path().join("xy.npy"), &Matrix::from_fn(60, 2, |i, j| (i * (j + 1)) as f64)).unwrap();
    for embed in ["pca2", "spectral-knn", "external"] {
        let mut args = strategy_args(&head, &labels, embed);
        if embed == "external" {
            args.extend(["--coords", "xy.npy"]);
        }
        ok(dir.path(), &args);
        let out = json(dir.path().join("graph.json"));
        let graph = &out["graph"];
        assert_eq!(graph["embedding"], embed);
        assert_eq!(graph["coords"].as_array().unwrap().len(), 60);
        assert_eq!(graph["legend"].as_array().unwrap().len(), 4);
        let prevalence: f64 = out["strategy"]["prevalence"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).sum();
        assert!((prevalence - 1.0).abs() < 1e-12);
        let wrong = graph["misclassified"].as_array().unwrap().iter().filter(|m| m.as_bool().unwrap()).count();
        let accuracy = out["accuracy"].as_f64().unwrap();
        assert!((accuracy - (60 - wrong) as f64 / 60.0).abs() < 1e-12);
        let svg = std::fs::read_to_string(dir.path().join("graph.svg")).unwrap();
        assert_eq!(svg.matches("<circle").count(), 60);
    }
    let out = json(dir.path().join("graph.json"));
    assert_eq!(out["graph"]["coords"][3], serde_json::json!([3.0, 6.0]));
}

#[test]
fn strategy_accepts_csv_labels_and_names() {
    let dir = tempfile::tempdir().unwrap();
    extract(dir.path(), "nmf", "4");
    let head = fixture_str("head.json");
    attribute_methods(dir.path(), &head, &["occlusion"]);
    let npy = conceptkit::io::read_labels(fixture("labels.npy")).unwrap();
    let csv: String = std::iter::once("label".to_string()).chain(npy.iter().map(|l| l.to_string())).collect::<Vec<_>>().join("\n");
    std::fs::write(dir.path().join("labels.csv"), csv).unwrap();
    let mut args = strategy_args(&head, "labels.csv", "pca2");
    args.extend(["--concept-names", "stripes,spots,grass,sky"]);
    ok(dir.path(), &args);
    let from_csv = json(dir.path().join("graph.json"));
    assert_eq!(from_csv["graph"]["legend"], serde_json::json!(["stripes", "spots", "grass", "sky"]));
    let labels = fixture_str("labels.npy");
    ok(dir.path(), &strategy_args(&head, &labels, "pca2"));
    assert_eq!(json(dir.path().join("graph.json"))["strategy"], from_csv["strategy"]);
}

#[test]
fn strategy_external_embedding_needs_coords() {
    let dir = tempfile::tempdir().unwrap();
    extract(dir.path(), "nmf", "4");
    let head = fixture_str("head.json");
    attribute_methods(dir.path(), &head, &["occlusion"]);
    let labels = fixture_str("labels.npy");
    let out = run(dir.path(), &strategy_args(&head, &labels, "external"));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--coords"));
}

#[test]
fn external_head_gives_the_same_importances() {
    let dir = tempfile::tempdir().unwrap();
    extract(dir.path(), "pca", "3");
    let spec = serde_json::json!({
        "type": "external",
        "cmd": [ADAPTER, "--weights", fixture_str("W.npy"), "--bias", fixture_str("b.npy")],
        "target": 0,
    });
    std::fs::write(dir.path().join("external.json"), spec.to_string()).unwrap();
    let affine = fixture_str("head.json");
    for (head, out) in [(affine.as_str(), "affine.npy"), ("external.json", "external.npy")] {
        let mut args = vec!["attribute"];
        args.extend(model_args(head));
        args.extend(["--method", "occlusion", "--out", out]);
        ok(dir.path(), &args);
    }
    let a: Matrix<f64> = read_matrix(dir.path().join("affine.npy")).unwrap();
    let b: Matrix<f64> = read_matrix(dir.path().join("external.npy")).unwrap();
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn eval_extraction_over_two_classes() {
    let dir = tempfile::tempdir().unwrap();
    let a: Matrix<f64> = read_matrix(fixture("A.npy")).unwrap();
    let half = |start: usize| Matrix::from_fn(30, 8, |i, j| a[(start + i, j)]);
    write_matrix(dir.path().join("first.npy"), &half(0)).unwrap();
    write_matrix(dir.path().join("second.npy"), &half(30)).unwrap();
    ok(
        dir.path(),
        &["eval-extraction", "--activations", "first.npy", "second.npy", "--method", "kmeans,pca", "--k", "3", "--folds", "2", "--out", "report.json"],
    );
    let report = json(dir.path().join("report.json"));
    let reports = report["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 4);
    assert_eq!(reports[1]["class"], "first");
    assert_eq!(reports[1]["method"], "pca");
    let kmeans = &report["summary"][0];
    assert_eq!(kmeans["classes"], 2);
    assert!((kmeans["sparsity"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    let mean = (reports[0]["fid"].as_f64().unwrap() + reports[2]["fid"].as_f64().unwrap()) / 2.0;
    assert_eq!(kmeans["fid"].as_f64().unwrap(), mean);
}

#[test]
fn verify_reports_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["verify", "--trials", "10", "--k", "4", "--seed", "1", "--out", "v.json"]);
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed, json(dir.path().join("v.json")));
    assert_eq!(printed["passed"], 10);
    assert_eq!(printed["failed"], 0);
}
