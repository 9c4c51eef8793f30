use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn tisp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tisp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn scalar_files(dir: &TempDir) -> (String, String) {
    (
        write(dir.path(), "X.csv", "1\n"),
        write(dir.path(), "y.csv", "3\n"),
    )
}

#[test]
fn scalar_solve_prints_two() {
    let dir = TempDir::new().unwrap();
    let (x, y) = scalar_files(&dir);
    let out = tisp(&["solve", "--design", &x, "--response", &y, "--rule", "soft(lambda=1)", "--rho", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out), "2.0\n");
}

#[test]
fn small_rho_is_refused_citing_descent() {
    let dir = TempDir::new().unwrap();
    let (x, y) = scalar_files(&dir);
    let out = tisp(&["solve", "--design", &x, "--response", &y, "--rule", "soft(lambda=1)", "--rho", "0.1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("descent"), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
}

#[test]
fn missing_response_file() {
    let dir = TempDir::new().unwrap();
    let (x, _) = scalar_files(&dir);
    let missing = dir.path().join("absent.csv");
    let out = tisp(&["solve", "--design", &x, "--response", missing.to_str().unwrap(), "--rule", "hard(lambda=1)"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("absent.csv"));
}

#[test]
fn malformed_csv_names_the_line() {
    let dir = TempDir::new().unwrap();
    let x = write(dir.path(), "X.csv", "1,2\n3,oops\n");
    let y = write(dir.path(), "y.csv", "1\n2\n");
    let out = tisp(&["solve", "--design", &x, "--response", &y, "--rule", "hard(lambda=1)"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn rule_parse_error_names_the_key() {
    let dir = TempDir::new().unwrap();
    let (x, y) = scalar_files(&dir);
    let out = tisp(&["solve", "--design", &x, "--response", &y, "--rule", "mcp(lambda=1,gama=3)"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("gama"), "{}", stderr(&out));
}

#[test]
fn unknown_flag_is_rejected() {
    let out = tisp(&["solve", "--design", "a", "--response", "b", "--rule", "soft", "--colour", "red"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn max_iter_exits_two_and_writes_trace() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    let out = tisp(&["simulate", "--n", "40", "--p", "20", "--j-star", "3", "--seed", "9", "--out", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let file = |n: &str| data.join(n).to_str().unwrap().to_string();
    let trace = dir.path().join("trace.csv");
    let beta = dir.path().join("beta.csv");
    let out = tisp(&[
        "solve",
        "--design", &file("X.csv"),
        "--response", &file("y.csv"),
        "--beta-star", &file("beta_star.csv"),
        "--rule", "hard(lambda=1)",
        "--max-iter", "2",
        "--trace", trace.to_str().unwrap(),
        "--out", beta.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
    let text = fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "iter,objective,fp_residual,support,pred_err,est_err,weighted_err");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 7);
    assert!(first[6].parse::<f64>().unwrap() >= 0.0);
    assert_eq!(fs::read_to_string(&beta).unwrap().lines().count(), 20);
}

#[test]
fn geometric_schedule_reaches_the_same_point() {
    let dir = TempDir::new().unwrap();
    let (x, y) = scalar_files(&dir);
    let out = tisp(&[
        "solve", "--design", &x, "--response", &y, "--rule", "soft(lambda=1)", "--rho", "1",
        "--lambda-schedule", "geometric:2.5,0.5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out), "2.0\n");
}

const DECAY: &str = r#"{
  "ensemble": {"kind": "gaussian-iid"},
  "n": 60, "p": 30, "J_star": 3, "sigma": 0.5,
  "noise_kind": "gaussian",
  "seeds": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20],
  "rules": ["soft", "hard", "mcp(lambda=1,gamma=3)"],
  "lambda_policy": {"kind": "theory", "A": 1.0}
}"#;

#[test]
fn decay_is_deterministic_across_jobs() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "decay.json", DECAY);
    let mut csvs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "4"), ("c", "1")] {
        let out_dir = dir.path().join(name);
        let out = tisp(&["decay", "--config", &config, "--out", out_dir.to_str().unwrap(), "--jobs", jobs]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        csvs.push(fs::read(out_dir.join("results.csv")).unwrap());
        let summary: serde_json::Value =
            serde_json::from_slice(&fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["rows"], 60);
        assert_eq!(summary["rules"].as_array().unwrap().len(), 3);
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    assert_eq!(text.lines().count(), 61);
    assert!(text.starts_with("seed,rule,n,p,J_star,sigma,lambda,rho,iters,pred_err,est_err,weighted_err,kappa_hat,plateau,plateau_ratio\n"));
}

#[test]
fn schema_violation_lists_fields() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "bad.json", r#"{"n": 10, "p": 5, "speed": 3}"#);
    let out = tisp(&["decay", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    for field in ["J_star", "seeds", "rules", "lambda_policy", "speed"] {
        assert!(err.contains(field), "{field} missing from {err}");
    }
}

#[test]
fn rate_writes_slope() {
    let dir = TempDir::new().unwrap();
    let config = write(
        dir.path(),
        "rate.json",
        r#"{
          "ensemble": {"kind": "gaussian-iid"},
          "p_grid": [20, 40], "J_star_grid": [1, 2], "n_factor": 10,
          "sigma": 1.0, "noise_kind": "gaussian",
          "seeds": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
          "rule": "hard",
          "lambda_policy": {"kind": "theory", "A": 1.0}
        }"#,
    );
    let out_dir = dir.path().join("out");
    let out = tisp(&["rate", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(summary["slope"].as_f64().unwrap().is_finite());
    assert_eq!(summary["points"].as_array().unwrap().len(), 4);
    assert_eq!(summary["rows"], 40);
}

#[test]
fn verify_axioms_passes() {
    let out = tisp(&["verify", "--suite", "axioms"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 18);
}

#[test]
fn verify_gap_suite_with_seed() {
    let out = tisp(&["verify", "--suite", "lemma5", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("PASS lemma5 gap"));
}

#[test]
fn verify_regularity_reports_without_failing() {
    let out = tisp(&["verify", "--suite", "regularity"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("FINDING regularity"), "{}", stdout(&out));
}

#[test]
fn verify_unknown_suite() {
    let out = tisp(&["verify", "--suite", "lemma9"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("lemma9"));
}
