use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn permembed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permembed"))
        .args(args)
        .env_remove("PERMEMBED_THREADS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn build_small(dir: &Path, extra: &[&str]) {
    let mut args = vec!["build", "--mode", "desk", "--n", "3", "--N", "1e5", "--sigma", "2", "--radius", "8"];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", dir.to_str().unwrap()]);
    let out = permembed(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn plan_paper_mode_derives_constants() {
    let out = permembed(&["plan", "--epsilon", "0.1429", "--mode", "paper"]);
    assert_eq!(out.status.code(), Some(0));
    let spec = json(&out);
    assert!((spec["delta"].as_f64().unwrap() - 1e-4).abs() < 1e-15);
    assert_eq!(spec["bound_satisfied"], false);
    assert_eq!(spec["n"], 6);
}

#[test]
fn plan_exit_codes() {
    assert_eq!(permembed(&["plan", "--mode", "desk"]).status.code(), Some(2));
    assert_eq!(permembed(&["plan", "--epsilon", "0.1", "--K", "2", "--mode", "paper"]).status.code(), Some(0));
    assert_eq!(permembed(&["plan", "--epsilon", "0.3", "--K", "2", "--mode", "paper"]).status.code(), Some(2));
    assert_eq!(permembed(&["plan", "--bogus"]).status.code(), Some(2));
    assert_eq!(permembed(&[]).status.code(), Some(2));
}

#[test]
fn plan_output_is_key_sorted() {
    let text = String::from_utf8(permembed(&["plan"]).stdout).unwrap();
    let keys: Vec<&str> = text.lines().filter_map(|l| l.trim().strip_prefix('"')?.split('"').next()).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn verify_refuses_truncated_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m");
    build_small(&m, &["--truncate", "2"]);
    let out = permembed(&["verify", "--matrix", m.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("refused"));
}

#[test]
fn verify_finds_effective_delta() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m");
    build_small(&m, &[]);
    let out = permembed(&["--strict", "verify", "--matrix", m.to_str().unwrap(), "--theta-count", "3", "--grid", "500"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out);
    assert_eq!(report["effective_delta_found"], true);
    let delta = report["delta"].as_f64().unwrap();
    assert!(delta > 0.0 && delta < 1.0 / 17.0);
    let tight = format!("{}", delta * 0.01);
    let out = permembed(&["--strict", "verify", "--matrix", m.to_str().unwrap(), "--theta-count", "3", "--grid", "500", "--delta-eff", &tight]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn refcheck_passes() {
    let out = permembed(&["--strict", "refcheck", "--count", "1000", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["pass"], true);
    assert!(r["max_relative_mismatch"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn linf_distortion_is_flat_on_basis_directions() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m");
    build_small(&m, &[]);
    let out = permembed(&["distort", "--matrix", m.to_str().unwrap(), "--norm", "lp:inf", "--basis"]);
    assert!(out.status.success());
    let r = json(&out);
    assert_eq!(r["count"], 6);
    assert_eq!(r["min_ratio"], r["max_ratio"]);
    assert_eq!(r["scale_source"], "computed");
}

#[test]
fn tables_csv_shape() {
    let out = permembed(&["tables", "--n", "3", "--range", "-1,1", "--step", "0.25"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,phi_n,Phi_n");
    assert_eq!(lines.len(), 10);
    let mid: Vec<f64> = lines[5].split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(mid[0], 0.0);
    assert!((mid[2] - 0.5).abs() < 1e-15);
    let edge = permembed(&["tables", "--n", "2", "--step", "0.5"]);
    assert!(String::from_utf8(edge.stdout).unwrap().contains(",inf,"));
    assert_eq!(permembed(&["tables", "--n", "3", "--range", "2,1"]).status.code(), Some(2));
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn builds_are_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    build_small(&a, &["--norm", "lp:2", "--norm", "topk:10", "--threads", "1"]);
    build_small(&b, &["--norm", "lp:2", "--norm", "topk:10", "--threads", "4"]);
    for f in ["matrix.json", "groups.csv", "lattice.csv", "lattice.json"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    let run: Value = serde_json::from_slice(&read(&a, "run.json")).unwrap();
    let outputs: Vec<&str> = run["outputs"].as_array().unwrap().iter().map(|o| o["path"].as_str().unwrap()).collect();
    assert_eq!(outputs, ["matrix.json", "groups.csv", "lattice.csv", "lattice.json"]);
}

#[test]
fn manifest_replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m");
    build_small(&m, &["--dense"]);
    let first = dir.path().join("d1");
    let out = permembed(&["distort", "--matrix", m.to_str().unwrap(), "--theta-count", "20", "--theta-seed", "3", "--out", first.to_str().unwrap()]);
    assert!(out.status.success());
    let second = dir.path().join("d2");
    let run = first.join("run.json");
    let out = permembed(&["--from-manifest", run.to_str().unwrap(), "--replay-dir", second.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["distort.json", "ratios.csv"] {
        assert_eq!(read(&first, f), read(&second, f));
    }
    let replay = m.join("run.json");
    let out = permembed(&["--from-manifest", replay.to_str().unwrap(), "--replay-dir", dir.path().join("m2").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&m, "dense.csv"), read(&dir.path().join("m2"), "dense.csv"));
}

#[test]
fn replay_rejects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m");
    build_small(&m, &[]);
    let d = dir.path().join("d");
    assert!(permembed(&["distort", "--matrix", m.to_str().unwrap(), "--theta-count", "5", "--out", d.to_str().unwrap()]).status.success());
    let groups = m.join("groups.csv");
    let mut text = std::fs::read_to_string(&groups).unwrap();
    text.push('\n');
    std::fs::write(&groups, text).unwrap();
    let out = permembed(&["--from-manifest", d.join("run.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dense_export_refused_above_limit() {
    let dir = tempfile::tempdir().unwrap();
    let out = permembed(&[
        "build", "--mode", "desk", "--n", "2", "--N", "200000", "--sigma", "1", "--radius", "3", "--dense", "--out",
        dir.path().join("m").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn build_from_plan_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p");
    let out = permembed(&[
        "plan", "--mode", "desk", "--n", "2", "--N", "5000", "--sigma", "1", "--alpha", "2", "--out", p.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let m = dir.path().join("m");
    let out = permembed(&["build", "--spec", p.join("spec.json").to_str().unwrap(), "--out", m.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["N"], 5000);
}
