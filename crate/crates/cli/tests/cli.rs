use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const QUADRATIC: &str = r#"
version = 1

[problem]
family = "quadratic"
noise_amplitude = 1e-3
seed = 2

[solvers.gp-ls]
mode = "gp-ls"
alpha0 = 0.5
eps_A = 1e-3
max_iterations = 40
"#;

const HORN: &str = r#"
version = 1

[problem]
family = "horn-surrogate"
batch_size = 10
seed = 4

[experiment]
replications = 2
effort_budget = 600

[noise]
points = 10
repeats = 20

[solvers.gp-ls]
mode = "gp-ls"
alpha0 = 0.25
eps_A = 1e-3

[solvers.gp-f]
mode = "gp-f"
alpha0 = 0.05
"#;

fn noisygp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noisygp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_exits_one_and_names_the_path() {
    let out = noisygp(&["solve", "--config", "/no/such/config.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("/no/such/config.toml"), "{}", stderr(&out));
}

#[test]
fn unknown_flag_exits_one() {
    let out = noisygp(&["solve", "--config", "x.toml", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!stderr(&out).is_empty());
}

#[test]
fn help_exits_zero() {
    let out = noisygp(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("estimate-noise"));
}

#[test]
fn estimate_noise_prints_an_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "horn.toml", HORN);
    let out = noisygp(&["estimate-noise", "--config", &cfg, "--method", "range"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let est: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(est["method"], "range");
    assert!(est["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn unknown_noise_method_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "horn.toml", HORN);
    let out = noisygp(&["estimate-noise", "--config", &cfg, "--method", "guess"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_writes_a_table_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "q.toml", QUADRATIC);
    let table = dir.path().join("out.csv");
    let out = noisygp(&["solve", "--config", &cfg, "--out", table.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().next(), Some(noisy_gp::harness::CSV_HEADER));
    assert_eq!(text.lines().count(), 41);
}

#[test]
fn solve_requires_a_solver_choice_when_ambiguous() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "horn.toml", HORN);
    let out = noisygp(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--solver"));
}

#[test]
fn compare_writes_tables_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "horn.toml", HORN);
    let results = dir.path().join("results");
    let out = noisygp(&["compare", "--config", &cfg, "--out", results.to_str().unwrap(), "--format", "jsonl"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for name in ["gp-f.jsonl", "gp-ls.jsonl", "summary.json"] {
        assert!(results.join(name).is_file(), "{name} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(results.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);
}

#[test]
fn solve_trace_then_diagnose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "q.toml", QUADRATIC);
    let trace = dir.path().join("trace.jsonl");
    let out = noisygp(&["solve", "--config", &cfg, "--trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = noisygp(&["diagnose", "--config", &cfg, "--trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["neighborhood"]["iterations"], 40);
    assert_eq!(report["neighborhood"]["satisfied"], true);
    assert_eq!(report["descent_violations"], 0);
}

#[test]
fn runtime_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "horn.toml", HORN);
    let missing = dir.path().join("absent.jsonl");
    let out = noisygp(&["diagnose", "--config", &cfg, "--solver", "gp-ls", "--trace", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}
