use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str], scenario: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_prodnet-eq"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(s) = scenario {
        cmd.arg("--scenario").arg(s);
    }
    cmd.output().expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_scenario(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn unknown_command_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["frobnicate"], None, dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_two_firm_instance() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve"], Some(&fixture("inst_b.json")), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = read_json(&dir.path().join("solve.json"));
    assert_eq!(doc["command"], "solve");
    let eq = &doc["result"]["equilibrium"];
    for v in eq["revenues"].as_array().unwrap() {
        assert!((v.as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
    assert!((eq["welfare"].as_f64().unwrap() + 2.05930).abs() < 1e-5);
    let summary = std::fs::read_to_string(dir.path().join("solve_summary.csv")).unwrap();
    assert!(summary.starts_with("quantity,value\n"));
    assert!(summary.contains("welfare,-2.05930602813\n"));
}

#[test]
fn poa_on_two_country_replicate() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["poa"], Some(&fixture("inst_b2.json")), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = &read_json(&dir.path().join("poa.json"))["result"];
    assert!((r["welfare_gap"].as_f64().unwrap() - 0.6 * 2f64.ln()).abs() < 1e-9);
    assert!((r["anarchy_constant"].as_f64().unwrap() - 0.6).abs() < 1e-12);
}

#[test]
fn policy_filter_keeps_islands() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["policy-filter"], Some(&fixture("inst_b2.json")), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("policy_filter_partitions.csv")).unwrap();
    assert_eq!(csv, "partition,blocks\n\"{{1},{2}}\",2\n");
}

#[test]
fn every_command_runs_on_the_risk_fixture() {
    for cmd in ["solve", "welfare", "nash", "dynamics", "replicate-scan", "poa", "risk"] {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&[cmd], Some(&fixture("risk_b3.json")), dir.path());
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
        assert!(dir.path().join(format!("{}.json", cmd.replace('-', "_"))).exists());
    }
}

#[test]
fn csv_format_skips_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--format", "csv"], Some(&fixture("inst_a.json")), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(!names.is_empty());
    assert!(names.iter().all(|n| n.ends_with(".csv")), "{names:?}");
}

#[test]
fn consumption_shares_must_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_scenario(
        dir.path(),
        r#"{"categories":[1,2],"consumption_shares":[0.5,0.4],
            "requirements":[[0.5,0.2,0.3],[0.5,0.3,0.2]]}"#,
    );
    let o = run(&["solve"], Some(&s), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("consumption_shares"), "{}", stderr(&o));
}

#[test]
fn misspelled_field_gets_a_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_scenario(
        dir.path(),
        r#"{"categories":[1,2],"consumption_shares":[0.5,0.5],
            "requirements":[[0.5,0.2,0.3],[0.5,0.3,0.2]],
            "productivity":{"kind":"constant","lamda":1.0}}"#,
    );
    let o = run(&["solve"], Some(&s), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("productivity") && err.contains("did you mean `lambda`"), "{err}");
}

#[test]
fn partition_cap_is_an_infeasible_exit() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["poa", "--n-cap", "1"], Some(&fixture("inst_b2.json")), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n_cap"), "{}", stderr(&o));
}

#[test]
fn epsilon_out_of_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["nash", "--epsilon", "1.5"], Some(&fixture("inst_b.json")), dir.path());
    assert_eq!(o.status.code(), Some(2));
}
