//! Black-box tests of the `timerate` binary: exit codes, diagnostics, and
//! byte-identical reruns.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn spec_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../specs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_timerate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "timerate-cli-{}-{}",
        tag,
        std::process::id()
    ));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("missing {}: {}", name, e))
}

#[test]
fn expand_section5_spec() {
    let dir = temp_dir("expand5");
    let out = run(&[
        "expand",
        spec_path("bec_broadcast.toml").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read(&dir, "summary.txt");
    assert!(summary.contains("sub-messages: 2"), "{}", summary);
    assert!(summary.contains("phases: 2"), "{}", summary);
    let expanded = read(&dir, "expanded.toml");
    assert!(expanded.contains("(1|3,1,2)"));
    assert!(dir.join("phase-1.toml").exists());
    assert!(dir.join("phase-2.toml").exists());
    let manifest = read(&dir, "manifest.json");
    assert!(manifest.contains("\"command\": \"expand\""));
}

#[test]
fn expand_staggered_spec_has_six_submessages() {
    let dir = temp_dir("expand6");
    let out = run(&[
        "expand",
        spec_path("three_node_staggered.toml").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let summary = read(&dir, "summary.txt");
    assert!(summary.contains("sub-messages: 6"), "{}", summary);
}

#[test]
fn malformed_deadline_triple_is_diagnosed() {
    let dir = temp_dir("badspec");
    let bad = dir.join("bad.toml");
    let text = std::fs::read_to_string(spec_path("bec_broadcast.toml"))
        .unwrap()
        .replace("node = 3\nsigma = 1.0", "node = 9\nsigma = 1.0");
    std::fs::write(&bad, text).unwrap();
    let out = run(&["expand", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("node 9"), "{}", stderr);
}

#[test]
fn region_reports_inner_bound_and_gap() {
    let dir = temp_dir("region5");
    let out = run(&[
        "region",
        spec_path("bec_broadcast.toml").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--reference",
        "0.5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&read(&dir, "summary.json")).unwrap();
    let max_sum = summary["max_sum_rate"].as_f64().unwrap();
    assert!((max_sum - 0.375).abs() < 1e-3, "{}", max_sum);
    let gap = summary["gap"].as_f64().unwrap();
    assert!((gap - 0.125).abs() < 1e-3, "{}", gap);
    let csv = read(&dir, "frontier.csv");
    assert!(csv.lines().next().unwrap().starts_with("R_1,"));
}

#[test]
fn region_static_bc_reports_optimum() {
    let dir = temp_dir("staticbc");
    let out = run(&[
        "region",
        spec_path("bec_broadcast.toml").to_str().unwrap(),
        "--static-bc",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_str(&read(&dir, "summary.json")).unwrap();
    let v = summary["max_rate"].as_f64().unwrap();
    assert!((v - 0.5).abs() < 1e-3, "{}", v);
}

#[test]
fn region_refuses_unsupported_structure_with_exit_3() {
    let dir = temp_dir("triangle");
    let out = run(&[
        "region",
        spec_path("triangle_multicast.toml").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unsupported phase structure"), "{}", stderr);
}

#[test]
fn region_reruns_are_byte_identical() {
    let dir_a = temp_dir("rerun-a");
    let dir_b = temp_dir("rerun-b");
    for dir in [&dir_a, &dir_b] {
        let out = run(&[
            "region",
            spec_path("product_pair.toml").to_str().unwrap(),
            "--sweep",
            "9",
            "--workers",
            "2",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(read(&dir_a, "frontier.csv"), read(&dir_b, "frontier.csv"));
    assert_eq!(read(&dir_a, "summary.json"), read(&dir_b, "summary.json"));
}

#[test]
fn simulate_writes_reports_and_is_deterministic() {
    let dir_a = temp_dir("sim-a");
    let dir_b = temp_dir("sim-b");
    for (dir, workers) in [(&dir_a, "1"), (&dir_b, "3")] {
        let out = run(&[
            "simulate",
            spec_path("bec_broadcast.toml").to_str().unwrap(),
            "--rates",
            "0,0.45",
            "--n",
            "2000",
            "--trials",
            "300",
            "--seed",
            "7",
            "--workers",
            workers,
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    // Identical reports regardless of worker count.
    assert_eq!(read(&dir_a, "report.json"), read(&dir_b, "report.json"));
    assert_eq!(read(&dir_a, "report.csv"), read(&dir_b, "report.csv"));
    let report: serde_json::Value = serde_json::from_str(&read(&dir_a, "report.json")).unwrap();
    assert!(report["joint_error_rate"].as_f64().unwrap() < 0.01);
}

#[test]
fn simulate_zero_trials_is_a_validation_error() {
    let dir = temp_dir("sim0");
    let out = run(&[
        "simulate",
        spec_path("bec_broadcast.toml").to_str().unwrap(),
        "--rates",
        "0,0.45",
        "--trials",
        "0",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no trials"));
}

#[test]
fn simulate_scaling_report() {
    let dir = temp_dir("simalpha");
    let out = run(&[
        "simulate",
        spec_path("bec_broadcast.toml").to_str().unwrap(),
        "--rates",
        "0,0.45",
        "--n",
        "2000",
        "--trials",
        "100",
        "--seed",
        "7",
        "--alpha",
        "2",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let scaling: serde_json::Value = serde_json::from_str(&read(&dir, "scaling.json")).unwrap();
    assert_eq!(scaling["agreements"].as_u64().unwrap(), 100);
    assert_eq!(scaling["rescaled_n"].as_u64().unwrap(), 1000);
}
