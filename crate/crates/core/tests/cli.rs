//! Exit codes, error reporting and manifests of the `locality` binary.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use common::fixtures;

fn locality(args: &[&str], cwd: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_locality"));
    cmd.args(args);
    if let Some(d) = cwd {
        cmd.current_dir(d);
    }
    cmd.output().unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr `{text}`: {e}"))
}

fn fixture(name: &str) -> String {
    fixtures().join(name).to_str().unwrap().to_string()
}

#[test]
fn report_without_inputs_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = locality(&["report", "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = fixture("toy_maze_hrm.json");
    let out = locality(&["patch", "--model", &model, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("seed"));
}

#[test]
fn unknown_flag_and_bad_channel_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = locality(&["patch", "--out", d, "--bogus"], None);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "usage");
    let model = fixture("toy_maze_hrm.json");
    let out = locality(&["patch", "--out", d, "--model", &model, "--seed", "1", "--channels", "sideways"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = locality(
        &["converge", "--trace", "/nonexistent/trace", "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(1));
    assert_ne!(stderr_json(&out)["error"], "usage");
}

#[test]
fn config_paths_resolve_against_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = locality(
        &["patch", "--config", &fixture("patch_config.json"), "--out", out_dir.to_str().unwrap(), "--workers", "2"],
        Some(dir.path()),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("run.json")).unwrap()).unwrap();
    let model = manifest["model"].as_str().unwrap();
    assert!(Path::new(model).is_absolute());
    assert_eq!(Path::new(model), std::fs::canonicalize(fixture("toy_maze_hrm.json")).unwrap());
    assert!(manifest.get("out").is_none() && manifest.get("workers").is_none());
    assert_eq!(manifest["seed"], 3);
}

#[test]
fn gen_toy_writes_a_readable_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = locality(
        &["gen-toy", "--model", &fixture("toy_maze_hrm.json"), "--seed", "42", "--examples", "4", "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fresh = locality::trace::read_trace(&dir.path().join("trace")).unwrap();
    assert_eq!(fresh.fields, common::golden::fixture_trace().fields);

    // The written parameter bundle loads back as a model.
    let again = tempfile::tempdir().unwrap();
    let params = dir.path().join("params");
    let out = locality(
        &["converge", "--model", params.to_str().unwrap(), "--seed", "42", "--examples", "4", "--out", again.path().to_str().unwrap()],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn object3d_writes_near_fractions() {
    let dir = tempfile::tempdir().unwrap();
    let out = locality(
        &["object3d", "--geometry", &fixture("scene10.csv"), "--seed", "1", "--surrogate", "identity", "--out", dir.path().to_str().unwrap()],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("near_frac.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "near_frac").unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    for line in rows {
        assert_eq!(line.split(',').nth(col), Some("1"), "{line}");
    }
}
