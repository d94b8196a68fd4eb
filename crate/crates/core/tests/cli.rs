//! End-to-end runs of the `mcascade` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn model(name: &str) -> String {
    models().join(name).display().to_string()
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcascade"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn check_reports_model_c_alpha_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["check", "--model", &model("model-c.json"), "--n-max", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("alpha-moment (alpha=2): holds"));
    let report = json(&dir.path().join("conditions.json"));
    let q = report["reports"][0]["quantities"]["p^(alpha-1)*rho_n(alpha)[n=1]"]
        .as_f64()
        .unwrap();
    assert!((q - 0.6).abs() < 1e-12);
}

#[test]
fn check_flags_infinite_second_moment_of_d2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check", "--model", &model("model-d2.json")], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(&dir.path().join("conditions.json"));
    let alpha = &report["reports"][0];
    assert_eq!(alpha["verdict"], "fails");
    assert_eq!(alpha["conclusion"], "not-finite");
}

#[test]
fn manifest_hashes_match_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "simulate",
            "--model",
            &model("model-e.json"),
            "--n",
            "4",
            "--replicates",
            "100",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest = json(&dir.path().join("manifest.json"));
    let outputs = manifest["outputs"].as_object().unwrap();
    assert!(outputs.contains_key("batch.csv") && outputs.contains_key("batch.bin"));
    for (name, hash) in outputs {
        let bytes = fs::read(dir.path().join(name)).unwrap();
        assert_eq!(
            hex::encode(Sha256::digest(&bytes)),
            hash.as_str().unwrap(),
            "{name}"
        );
    }
    assert_eq!(manifest["seed"], 1);
}

#[test]
fn missing_model_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["check", "--model", "/nonexistent/model.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cannot read model"), "{}", stderr(&o));
}

#[test]
fn zero_replicates_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "simulate",
            "--model",
            &model("model-c.json"),
            "--n",
            "3",
            "--replicates",
            "0",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn estimate_rejects_batch_from_another_model() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch");
    let o = run(
        &[
            "simulate",
            "--model",
            &model("model-c.json"),
            "--n",
            "3",
            "--replicates",
            "50",
            "--seed",
            "1",
        ],
        &batch,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let est = dir.path().join("est");
    let o = run(
        &[
            "estimate",
            "--model",
            &model("model-d2.json"),
            "--batch",
            batch.to_str().unwrap(),
        ],
        &est,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stale data"), "{}", stderr(&o));
}

#[test]
fn estimate_from_batch_directory() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch");
    let o = run(
        &[
            "simulate",
            "--model",
            &model("model-e.json"),
            "--n",
            "6",
            "--replicates",
            "2000",
            "--seed",
            "2",
        ],
        &batch,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let est = dir.path().join("est");
    let o = run(
        &[
            "estimate",
            "--model",
            &model("model-e.json"),
            "--batch",
            batch.to_str().unwrap(),
        ],
        &est,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(est.join("estimates.json").exists());
    assert!(est.join("laplace_n6.csv").exists());
    assert!(est.join("tail_n6.csv").exists());
}

#[test]
fn all_replicates_capped_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "simulate",
            "--model",
            &model("model-c.json"),
            "--n",
            "5",
            "--replicates",
            "10",
            "--seed",
            "1",
            "--cap",
            "4",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn mbrw_build_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["mbrw-build", "--spec", &model("tt1.mbrw.json"), "--t", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let built = mcascade::load_model(dir.path().join("model.json")).unwrap();
    assert!(mcascade::validate_model(&built).assumption_h.holds());
    let check = dir.path().join("check");
    let o = run(
        &[
            "check",
            "--model",
            dir.path().join("model.json").to_str().unwrap(),
        ],
        &check,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn reruns_are_bitwise_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "report",
        "--model",
        &model("model-e.json"),
        "--n",
        "5",
        "--replicates",
        "500",
        "--seed",
        "11",
    ];
    let mut trees = Vec::new();
    for workers in ["1", "2", "4"] {
        let out = dir.path().join(format!("w{workers}"));
        let mut full = args.to_vec();
        full.extend(["--workers", workers]);
        let o = run(&full, &out);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        trees.push(files);
    }
    assert!(!trees[0].is_empty());
    assert_eq!(trees[0], trees[1]);
    assert_eq!(trees[0], trees[2]);
}
