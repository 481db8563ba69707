use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn cogsec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cogsec")).args(args).output().unwrap()
}

fn run(command: &str, scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        command,
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    cogsec(&args)
}

#[test]
fn disruption_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        "disruption",
        &scenario("two_node_disruption.json"),
        dir.path(),
        &["--check"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(dir.path().join("disruption.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("M,A,Q,Q_rounded,lmi_residual"));
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&fields[..2], &["{}", "{2}"]);
    let q: f64 = fields[2].parse().unwrap();
    assert!((q - 5.0 / 9.0).abs() < 1e-6);
    assert_eq!(fields[3], "1");

    let cert: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["storage"].as_array().unwrap().len(), 2);

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "disruption");
    assert_eq!(manifest["scenario_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["check"]["issues"].as_array().unwrap().len(), 0);
    assert_eq!(
        manifest["outputs"],
        serde_json::json!(["disruption.csv", "certificate.json"])
    );
}

#[test]
fn subcommand_must_match_directive() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("game", &scenario("two_node_disruption.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("disruption"));
}

#[test]
fn invalid_scenario_reports_every_issue() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{
          "network": { "inline": { "nodes": 2, "interconnection": [[0,1],[1,0]], "control_gains": [1,1], "alarm_thresholds": [1,1] } },
          "budgets": { "alpha": 1, "beta": 1, "energy": -1.0 },
          "run": { "disruption": { "monitors": [], "attack": [7] } }
        }"#,
    )
    .unwrap();
    let out = run("disruption", &path, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("energy"), "{err}");
    assert!(err.contains("run.disruption.attack"), "{err}");
}

#[test]
fn missing_scenario_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("disruption", &dir.path().join("nope.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn grid_emits_trace_grid_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        "grid",
        &scenario("grid6.json"),
        dir.path(),
        &["--check", "--force-full-iteration"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("k,A_k,Q,Q_rounded,M_k,R,R_rounded,optimized,repeated,seed\n"));
    assert_eq!(trace.lines().count(), 1 + 9);
    let grid = fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 81);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("mismatch.json")).unwrap()).unwrap();
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn seed_override_changes_level_zero() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run("grid", &scenario("grid6.json"), a.path(), &["--seed", "1"])
        .status
        .success());
    assert!(run("grid", &scenario("grid6.json"), b.path(), &["--seed", "2"])
        .status
        .success());
    let ta = fs::read_to_string(a.path().join("trace.csv")).unwrap();
    let tb = fs::read_to_string(b.path().join("trace.csv")).unwrap();
    assert!(ta.lines().nth(1).unwrap().ends_with(",1"));
    assert!(tb.lines().nth(1).unwrap().ends_with(",2"));
}

#[test]
fn defender_and_baseline_pass_checks() {
    for (cmd, file, stem) in [
        ("defender", "defender5.json", "defender"),
        ("baseline", "baseline5.json", "baseline"),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let out = run(cmd, &scenario(file), dir.path(), &["--check"]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.path().join(format!("{stem}.csv")).exists());
        assert!(dir.path().join(format!("{stem}_adversaries.csv")).exists());
    }
}

#[test]
fn generated_network_round_trips_into_a_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = cogsec(&[
        "gen",
        "--nodes",
        "4",
        "--density",
        "0.6",
        "--seed",
        "9",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let network: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("network.json")).unwrap()).unwrap();
    let scenario = serde_json::json!({
        "network": network,
        "budgets": { "alpha": 1, "beta": 1, "energy": 1.0 },
        "run": { "adversary": { "monitors": [1] } }
    });
    let path = dir.path().join("scenario.json");
    fs::write(&path, scenario.to_string()).unwrap();
    let out = run("adversary", &path, &dir.path().join("out"), &["--check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/adversary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert_eq!(csv.lines().filter(|l| l.ends_with(",true")).count(), 1);
}
