use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use landau_cli::parse_scenario;
use serde_json::Value;

const MAXWELLIAN: &str = r#"{
  "initial_data": {"kind": "maxwellian"},
  "grid": {"n": 17, "L": 6},
  "solver": {"dt": 0.01, "t_final": 0.1},
  "monitors": {"q": 4, "ball": {"center": [0, 0, 0], "radius": 2}, "snapshot_stride": 5, "sample_budget": 2000}
}"#;

const UNSTABLE: &str = r#"{
  "initial_data": {"kind": "compact_bump", "center": [0.5, 0, 0], "radius": 2, "height": 0.3, "power": 2},
  "grid": {"n": 33, "L": 8},
  "solver": {"dt": 0.1, "t_final": 2.0, "scheme": "fully_explicit"},
  "monitors": {"verdict": false}
}"#;

fn landau(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_landau")).args(args).output().expect("binary runs")
}

fn run_config(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("scenario.json");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let mut args = extra.to_vec();
    args.extend(["run", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    landau(&args)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn maxwellian_run_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_config(tmp.path(), MAXWELLIAN, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("out");

    let csv = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("time,mass,px,py,pz,energy"));
    assert_eq!(lines.count(), 10);

    let snaps: Vec<_> = fs::read_dir(out.join("snapshots")).unwrap().collect();
    assert_eq!(snaps.len(), 3);

    let report = read_json(&out.join("holder_report.json"));
    assert!(report["holder"]["report"]["space_quotient"].as_f64().unwrap().is_finite());
    assert_eq!(report["regularity"]["hypothesis_held"], Value::Bool(true));

    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["steps_completed"], 10);
    let original = parse_scenario(MAXWELLIAN).unwrap();
    let replay = parse_scenario(&manifest["config"].to_string()).unwrap();
    assert_eq!(original, replay);
}

#[test]
fn single_worker_rerun_is_bit_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = run_config(d.path(), MAXWELLIAN, &["--threads", "1"]);
        assert_eq!(o.status.code(), Some(0));
    }
    let read = |d: &tempfile::TempDir, f: &str| fs::read(d.path().join("out").join(f)).unwrap();
    assert_eq!(read(&a, "diagnostics.csv"), read(&b, "diagnostics.csv"));
    assert_eq!(read(&a, "holder_report.json"), read(&b, "holder_report.json"));
}

#[test]
fn unstable_explicit_run_fails_with_partial_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_config(tmp.path(), UNSTABLE, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("out");
    let rows = fs::read_to_string(out.join("diagnostics.csv")).unwrap().lines().count() - 1;
    assert!(rows >= 1 && rows < 20, "rows = {rows}");
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["steps_completed"], rows);
    assert!(manifest["status"].as_str().unwrap().contains("max norm grew"));
}

#[test]
fn verify_kernel_reports_the_second_moment() {
    let o = landau(&["verify", "kernel"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("∫P₁P₁ dσ = 4.18879"), "{text}");
    assert!(!text.contains("FAIL"));
}

#[test]
fn verify_kernel_mean_zero_at_32_nodes() {
    let o = landau(&["verify", "kernel", "--nodes", "32"]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o).lines().find(|l| l.contains("∫μ_kl")).unwrap().to_string();
    let value: f64 = line.split_whitespace().rev().nth(3).unwrap().parse().unwrap();
    assert!(value < 1e-8, "{line}");
}

#[test]
fn verify_conv_at_n17() {
    let o = landau(&["verify", "conv", "--n", "17"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.contains("fast vs direct") && l.ends_with("PASS")).count(), 4);
}

#[test]
fn kernel_failures_exit_one() {
    // Too few nodes for the mean-zero identity: reported as a failed row.
    let o = landau(&["verify", "kernel", "--nodes", "8"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn invalid_scenarios_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = r#"{"initial_data": {"kind": "maxwellian"}, "monitors": {"q": 2}, "extra": 1}"#;
    let o = run_config(tmp.path(), bad, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("extra") && err.contains("exceed 3"), "{err}");
}

#[test]
fn missing_config_exits_four() {
    let o = landau(&["run", "/nonexistent/scenario.json", "-o", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn norms_recomputes_from_stored_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_config(tmp.path(), MAXWELLIAN, &[]).status.code(), Some(0));
    let dir = tmp.path().join("out");
    let o = landau(&["norms", dir.to_str().unwrap(), "--alpha", "0.5", "--q", "4", "--budget", "2000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["snapshots"], 3);
    assert_eq!(doc["regularity"]["hypothesis_held"], Value::Bool(true));

    let o = landau(&["norms", dir.to_str().unwrap(), "--q", "2"]);
    assert_eq!(o.status.code(), Some(2));
}
