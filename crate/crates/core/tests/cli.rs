use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_robust-slp"))
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str], config: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).output().unwrap()
}

const SMALL_SWEEP: &str = "[system]\nn_t = 2\nn_r = 2\n\n[problem]\nbeta = 1.0\n\n[sweep]\n\
    gamma_db = [4.0, 10.0]\nbetas = [1.0, 10.0]\nblocks = 3\nsymbols_per_block = 10\nschemes = [\"wc-slp\"]\n";

fn csv_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn solve_writes_a_converged_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "solve.toml", "[system]\nn_t = 4\nn_r = 2\n\n[problem]\nbeta = 10.0\nepsilon = 0.1\n");
    let out = run(&["solve"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["converged"].as_bool().unwrap());
    assert!(!doc["trace"].as_array().unwrap().is_empty());
    assert_eq!(doc["u"].as_array().unwrap().len(), 8);
    assert!(doc["power"].as_f64().unwrap() > 0.0);
}

#[test]
fn solve_with_zero_epsilon_has_no_distortion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "solve.toml", "[system]\nn_t = 3\nn_r = 2\n\n[problem]\nbeta = 5.0\nepsilon = 0.0\n");
    let out = run(&["solve"], &cfg);
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["w"].as_array().unwrap().iter().all(|v| v.as_f64().unwrap() == 0.0));
}

#[test]
fn solve_reads_an_explicit_channel() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "solve.toml",
        "[system]\nn_t = 1\nn_r = 1\n\n[problem]\nbeta = 1e6\nepsilon = 1e-9\ngamma_db = 6.020599913279624\n\
         symbols = [0]\n\n[problem.channel]\nre = [[1.0]]\nim = [[0.0]]\n",
    );
    let out = run(&["solve"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    // gamma = 4 and a unit channel: the nominal power is 4.
    assert!((doc["power"].as_f64().unwrap() - 4.0).abs() < 1e-3);
}

#[test]
fn missing_beta_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "bad.toml", "[system]\nn_t = 2\nn_r = 2\n\n[problem]\nepsilon = 0.1\n");
    let out = run(&["solve"], &cfg);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));
}

#[test]
fn unknown_key_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "bad.toml", "[problem]\nbeta = 1.0\nbetta = 2.0\n");
    let out = run(&["sweep"], &cfg);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn sweep_emits_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "sweep.toml", SMALL_SWEEP);
    let out = run(&["sweep"], &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0], robust_slp::cli::CSV_HEADER);
    assert!(text.lines().any(|l| l.starts_with("# ") && l.contains("seed = 2024")));
    let first: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(first.len(), 11);
    assert_eq!(first[2], "wc-slp");
}

#[test]
fn sweep_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "sweep.toml", SMALL_SWEEP);
    let a = run(&["sweep", "--seed", "7"], &cfg).stdout;
    let b = run(&["sweep", "--seed", "7"], &cfg).stdout;
    let c = run(&["sweep", "--seed", "8"], &cfg).stdout;
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn scheme_filter_restricts_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "sweep.toml", &SMALL_SWEEP.replace("schemes = [\"wc-slp\"]\n", ""));
    let out = run(&["sweep", "--schemes", "nominal-slp"], &cfg);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 5);
    assert!(rows[1..].iter().all(|r| r.split(',').nth(2) == Some("nominal-slp")));
}

#[test]
fn ee_complement_changes_only_the_efficiency_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "sweep.toml", SMALL_SWEEP);
    let plain = String::from_utf8(run(&["sweep"], &cfg).stdout).unwrap();
    let comp = String::from_utf8(run(&["sweep", "--ee-complement"], &cfg).stdout).unwrap();
    for (a, b) in csv_rows(&plain).iter().zip(csv_rows(&comp)).skip(1) {
        let (a, b): (Vec<&str>, Vec<&str>) = (a.split(',').collect(), b.split(',').collect());
        for col in 0..a.len() {
            if col != 6 {
                assert_eq!(a[col], b[col]);
            }
        }
    }
}

#[test]
fn validate_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "v.toml", "[problem]\nbeta = 1.0\n\n[validate]\ninstances = 10\nsphere_samples = 200\n");
    let report = dir.path().join("report.json");
    let out = bin().args(["validate", "--config"]).arg(&cfg).arg("--out").arg(&report).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("seed 2024"));
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 5);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert!(doc["passed"].as_bool().unwrap());
}

#[test]
fn validate_flags_the_literal_momentum_rule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "v.toml",
        "[problem]\nbeta = 1.0\n\n[solver]\nmomentum = \"literal\"\n\n[validate]\ninstances = 10\nsphere_samples = 200\n",
    );
    let out = run(&["validate"], &cfg);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).lines().any(|l| l.starts_with("FAIL")));
}
