use std::path::Path;
use std::process::{Command, Output};

fn ups(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ups"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

const SMALL_CONFIG: &str = r#"{
  "experiment_id": "custom",
  "p": 400,
  "params": {"vartheta": 0.5, "theta": 0.9, "r": 3.0, "q": 1.0, "a": 0.4, "omega0": 0.45, "gamma": 0.5, "cap_a": 3.0},
  "prior": {"kind": "uniform", "half_width": 0.5},
  "omega_spec": {"kind": "pentadiagonal", "a1": 0.4, "a2": 0.1},
  "model": "random_design_gaussian",
  "methods": ["ups_estimated", "lasso"],
  "reps": 3,
  "seed": 5,
  "sweep": [{"field": "tau", "values": [4.0, 6.0]}],
  "tuning": "fixed_q",
  "n_override": null,
  "eps_override": null,
  "gram_threshold": null,
  "k_max": 20,
  "flop_ceiling": 5e11
}"#;

fn write_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, SMALL_CONFIG).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(ups(&[]).status.code(), Some(1));
    assert_eq!(ups(&["simulate"]).status.code(), Some(1));
    assert_eq!(ups(&["phase", "--bogus"]).status.code(), Some(1));
    assert_eq!(ups(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_two() {
    let out = ups(&["simulate", "--experiment", "exp9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("exp9"));
    let out = ups(&["simulate", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("/nonexistent/config.json"));
    assert_eq!(ups(&["phase"]).status.code(), Some(2));
}

#[test]
fn phase_writes_a_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("grid.csv");
    let out = ups(&["phase", "--vartheta-step", "0.1", "--r-step", "0.5", "--r-max", "2", "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = std::fs::read_to_string(&out_path).unwrap();
    // 9 vartheta values by 4 r values, one row per method
    assert_eq!(csv.lines().count(), 1 + 3 * 9 * 4);
    assert!(csv.lines().next().unwrap().starts_with("vartheta"));
}

#[test]
fn simulate_prints_csv_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = ups(&["simulate", "--config", &cfg, "--reps", "2"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = text(&out.stdout);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sweep_key,sweep_value,method,p,n,vartheta,theta,r,q,mean_hamming,stderr,mean_fp,mean_fn,ratio_to_sp,reps,wall_ms"
    );
    assert_eq!(lines.count(), 4);

    let json_path = dir.path().join("report.json");
    let out = ups(&["simulate", "--config", &cfg, "--seed", "9", "--out", json_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 4);
    assert_eq!(report["provenance"]["config"]["seed"], 9);
}

#[test]
fn gen_then_fit_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let data = dir.path().join("data");
    let out = ups(&["gen", "--config", &cfg, "--sweep-index", "1", "--rep", "2", "--out", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let fit_path = dir.path().join("fit.json");
    let out = ups(&["fit", "--data", data.to_str().unwrap(), "--method", "lasso", "--out", fit_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&fit_path).unwrap()).unwrap();
    assert_eq!(fit["p"], 400);
    let h = &fit["hamming"];
    assert_eq!(h["total"].as_u64().unwrap(), h["false_pos"].as_u64().unwrap() + h["false_neg"].as_u64().unwrap());

    let out = ups(&["fit", "--data", data.to_str().unwrap(), "--method", "ups_estimated", "--q", "0.9"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let fit: serde_json::Value = serde_json::from_str(&text(&out.stdout)).unwrap();
    assert_eq!(fit["method"], "ups_estimated");

    let out = ups(&["fit", "--data", data.to_str().unwrap(), "--method", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn table_check_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // two replications cannot match the published means
    let out = ups(&["tables", "--check", "--experiments", "exp1", "--reps", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("comparisons within tolerance"));
    assert!(dir.path().join("exp1.csv").exists());
    assert!(dir.path().join("exp1.json").exists());
}
