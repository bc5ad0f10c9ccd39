use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ddam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddam"))
        .args(args)
        .env_remove("DDAM_OUT_DIR")
        .output()
        .unwrap()
}

fn minimal() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/minimal.toml")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = ddam(&["run", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/config.toml"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(ddam(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn bad_override_is_a_usage_error() {
    let cfg = minimal();
    let out = ddam(&["validate-config", s(&cfg), "-o", "seeds=[]"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_report_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = minimal();
    let out = ddam(&["run", s(&cfg), "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
    assert!(dir.path().join("fig3_regret_vs_T.csv").exists());
}

#[test]
fn seed_override_doubles_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = minimal();
    let out = ddam(&["run", s(&cfg), "-o", "seeds=1,2", "--out", s(dir.path())]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2 * 2);
}

#[test]
fn existing_outputs_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = minimal();
    let args = ["run", s(&cfg), "--out", s(dir.path())];
    assert!(ddam(&args).status.success());
    let first = std::fs::read(dir.path().join("report.csv")).unwrap();
    let again = ddam(&args);
    assert_eq!(again.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert!(ddam(&forced).status.success());
    assert_eq!(std::fs::read(dir.path().join("report.csv")).unwrap(), first);
}

#[test]
fn gen_data_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let traffic = dir.path().join("traffic.csv");
    let out = ddam(&["gen-data", "periodic-traffic", "--aps", "2", "--days", "1", "--out", s(&traffic)]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&traffic).unwrap().lines().count(), 1 + 288);

    let synth = dir.path().join("synthetic.csv");
    let out = ddam(&[
        "gen-data", "synthetic", "--agents", "3", "--d-k", "2", "--d-v", "2", "--horizon", "10", "--out", s(&synth),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&synth).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 10);
    assert_eq!(ddam(&["gen-data", "synthetic", "--out", s(&synth)]).status.code(), Some(2));
}

#[test]
fn trees_prints_link_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trees.csv");
    let cfg = minimal();
    let out = ddam(&["trees", s(&cfg), "--csv", s(&csv)]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("C_max[steiner]") && text.contains("C_max[sumdelay]"));
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("agent,design,edges"));
}

#[test]
fn validate_config_prints_resolved_config() {
    let cfg = minimal();
    let out = ddam(&["validate-config", s(&cfg)]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains(": ok") && text.contains("\"scenario\": \"synthetic\""));
}
