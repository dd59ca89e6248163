use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
    out: PathBuf,
}

fn tcs(dir: &TempDir, cmd: &str, scenario: &str, extra: &[&str]) -> Run {
    let path = dir.path().join(format!("{cmd}.json"));
    std::fs::write(&path, scenario).unwrap();
    let out = dir.path().join(format!("out-{cmd}"));
    let Output { status, stdout, stderr } = Command::new(env!("CARGO_BIN_EXE_tcs"))
        .arg(cmd)
        .arg("--scenario")
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    Run {
        code: status.code().unwrap(),
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
        out,
    }
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

const CONSENSUS: &str = r#"{
  "graph": {"type": "complete", "n": 3},
  "phi": {"family": "constant", "kappa": 1.0},
  "zeta": {"family": "constant", "kappa": 1.0},
  "initial": {"type": "explicit",
              "positions": [[0.0, 0.0], [0.3, 0.0], [0.0, 0.4]],
              "velocities": [[1.0, -1.0], [1.0, -1.0], [1.0, -1.0]],
              "temperatures": [2.0, 2.0, 2.0]},
  "numerics": {"h": 0.1, "t_end": 1.05, "sample_every": 3},
  "certificate": {"x_inf": [0.25, 0.5, 1.0], "delta": 1.0}
}"#;

fn near_consensus(extra: &str) -> String {
    format!(
        r#"{{
  "graph": {{"type": "random", "n": 5, "p": 0.6, "seed": 3}},
  "phi": {{"family": "algebraic", "kappa": 1.0, "s": 0.5}},
  "zeta": {{"family": "exponential", "kappa": 1.0, "ell": 5.0}},
  "initial": {{"type": "random", "seed": 9, "dim": 2, "position_box": 0.5,
              "velocity_scale": 1e-4, "temperature_range": [1.0, 1.0001]}}{extra}
}}"#
    )
}

#[test]
fn graph_info_examples() {
    let dir = TempDir::new().unwrap();
    let r = tcs(&dir, "graph-info", r#"{"graph": {"type": "complete", "n": 4}}"#, &[]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("gamma: 1"));
    let r = tcs(&dir, "graph-info", r#"{"graph": {"type": "path", "n": 3}}"#, &[]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("roots: [0]") && r.stdout.contains("gamma: 2"));
    assert_eq!(read(&r.out, "graph_info.txt"), r.stdout);
    let r = tcs(&dir, "graph-info", r#"{"graph": {"type": "edges", "n": 3, "edges": [[0, 1]]}}"#, &[]);
    assert_ne!(r.code, 0);
    assert!(r.stdout.contains("no spanning tree"));
}

#[test]
fn malformed_scenarios_exit_2_with_context() {
    let dir = TempDir::new().unwrap();
    let r = tcs(&dir, "graph-info", r#"{"graph": {"type": "path", "n": -3}}"#, &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("graph"), "{}", r.stderr);
    let r = tcs(&dir, "simulate", r#"{"graph": {"type": "path", "n": 3}, "bogus": 1}"#, &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("bogus"), "{}", r.stderr);
    let r = tcs(&dir, "simulate", r#"{"graph": {"type": "path", "n": 3}}"#, &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("phi"));
    let rootless = r#"{"graph": {"type": "edges", "n": 2, "edges": []},
        "phi": {"family": "constant", "kappa": 1}, "zeta": {"family": "constant", "kappa": 1},
        "initial": {"type": "explicit", "positions": [[0], [1]], "velocities": [[0], [1]], "temperatures": [1, 1]},
        "numerics": {"h": 0.1, "t_end": 1}}"#;
    let r = tcs(&dir, "simulate", rootless, &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("spanning tree"));
}

#[test]
fn consensus_simulation_has_zero_diameters() {
    let dir = TempDir::new().unwrap();
    let r = tcs(&dir, "simulate", CONSENSUS, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let diag = read(&r.out, "diagnostics.csv");
    for name in ["DV", "DB", "DTheta"] {
        assert!(column(&diag, name).iter().all(|&v| v == 0.0));
    }
    // 11 steps, samples at 0, 3, 6, 9 and the final step
    assert_eq!(column(&diag, "t").len(), 5);
    assert_eq!(*column(&diag, "t").last().unwrap(), 1.05);
    let traj = read(&r.out, "trajectory.csv");
    assert!(traj.starts_with("t,agent,x1,x2,v1,v2,beta,theta\n"));
    assert_eq!(traj.lines().count(), 1 + 5 * 3);
    assert!(column(&traj, "theta").iter().all(|&t| t == 2.0));
}

#[test]
fn consensus_certificate_is_satisfied() {
    let dir = TempDir::new().unwrap();
    let r = tcs(&dir, "certify", CONSENSUS, &[]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    let cert: Value = serde_json::from_str(&read(&r.out, "certificate.json")).unwrap();
    assert_eq!(cert["satisfied"], true);
    assert_eq!(cert["mode"], "continuous");
    assert_eq!(cert["h_certified"], Value::Null);
    assert!(cert["constants"]["C1"].as_f64().unwrap() > 0.0);
    // consensus: lhs = D(X0) = 0.5, so 0.25 fails and 1.0 has the best ratio
    assert_eq!(cert["x_inf"], 1.0);
    assert_eq!(cert["lhs"], 0.5);
}

#[test]
fn discrete_step_above_bound_is_rejected() {
    let dir = TempDir::new().unwrap();
    let scenario = near_consensus(
        r#", "mode": "discrete", "numerics": {"h": 0.8, "n_steps": 10},
        "certificate": {"x_inf": 3.0, "n0": 4}"#,
    );
    let r = tcs(&dir, "certify", &scenario, &[]);
    assert_eq!(r.code, 1);
    let cert: Value = serde_json::from_str(&read(&r.out, "certificate.json")).unwrap();
    assert_eq!(cert["h_certified"], false);
    assert_eq!(cert["satisfied"], false);
}

#[test]
fn certified_simulation_respects_envelope_columns() {
    let dir = TempDir::new().unwrap();
    let scenario = near_consensus(
        r#", "numerics": {"h": 0.01, "t_end": 30.0, "sample_every": 10},
        "certificate": {"x_inf": {"start": 0.5, "stop": 3.0, "count": 11}, "delta": [0.5, 1.0, 2.0]}"#,
    );
    let r = tcs(&dir, "simulate", &scenario, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let diag = read(&r.out, "diagnostics.csv");
    let (db, dv) = (column(&diag, "DB"), column(&diag, "DV"));
    let (eb, ev) = (column(&diag, "envB"), column(&diag, "envV"));
    let tol = 1e-9 * db[0].max(dv[0]);
    assert_eq!(db.len(), 301);
    for k in 0..db.len() {
        assert!(db[k] <= eb[k] + tol && dv[k] <= ev[k] + tol, "row {k}");
    }
}

#[test]
fn discrete_simulation_rows_and_uncertified_count() {
    let dir = TempDir::new().unwrap();
    let scenario = near_consensus(r#", "mode": "discrete", "numerics": {"h": 0.05, "n_steps": 25, "sample_every": 4}"#);
    let r = tcs(&dir, "simulate", &scenario, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("uncertified steps: 0"));
    // 1 + floor(25 / 4) samples plus the final step
    assert_eq!(column(&read(&r.out, "diagnostics.csv"), "t").len(), 8);
}

#[test]
fn integration_failure_keeps_partial_output() {
    let dir = TempDir::new().unwrap();
    let scenario = r#"{
      "graph": {"type": "complete", "n": 2},
      "phi": {"family": "constant", "kappa": 1.0},
      "zeta": {"family": "constant", "kappa": 1.0},
      "initial": {"type": "explicit", "positions": [[0], [1]], "velocities": [[0], [1]],
                  "temperatures": [1.0, 0.1]},
      "mode": "discrete",
      "numerics": {"h": 0.5, "n_steps": 10}
    }"#;
    let r = tcs(&dir, "simulate", scenario, &[]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    let record: Value = serde_json::from_str(&read(&r.out, "error.json")).unwrap();
    assert!(record["error"].as_str().unwrap().contains("reciprocal"));
    assert_eq!(record["t"], 0.5);
    assert_eq!(column(&read(&r.out, "diagnostics.csv"), "t"), vec![0.0]);
}

#[test]
fn limit_check_examples() {
    let dir = TempDir::new().unwrap();
    let r = tcs(&dir, "limit-check", CONSENSUS, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = read(&r.out, "limit_check.csv");
    assert_eq!(csv.lines().count(), 4);
    assert!(column(&csv, "gap").iter().all(|&g| g == 0.0));

    let scenario = r#"{
      "graph": {"type": "cycle", "n": 5},
      "phi": {"family": "algebraic", "kappa": 1.0, "s": 0.5},
      "zeta": {"family": "exponential", "kappa": 1.0, "ell": 5.0},
      "initial": {"type": "random", "seed": 2, "dim": 2, "position_box": 0.5,
                  "velocity_scale": 1e-6, "temperature_range": [1.0, 1.000001]},
      "certificate": {"x_inf": 3.0, "delta": 1.0, "limit_h": [0.5, 0.1, 0.01, 0.001]}
    }"#;
    let r = tcs(&dir, "limit-check", scenario, &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let csv = read(&r.out, "limit_check.csv");
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].contains("skipped"), "{}", rows[0]);
    let gaps: Vec<f64> = rows[1..].iter().map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn reruns_are_byte_identical_and_seed_override_changes_output() {
    let dir = TempDir::new().unwrap();
    let scenario = near_consensus(r#", "numerics": {"h": 0.05, "t_end": 2.0, "sample_every": 5}"#);
    let a = tcs(&dir, "simulate", &scenario, &["--seed", "5"]);
    let first = read(&a.out, "trajectory.csv");
    let b = tcs(&dir, "simulate", &scenario, &["--seed", "5"]);
    assert_eq!(first, read(&b.out, "trajectory.csv"));
    let c = tcs(&dir, "simulate", &scenario, &["--seed", "6"]);
    assert_ne!(first, read(&c.out, "trajectory.csv"));
}
