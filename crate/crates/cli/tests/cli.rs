use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cmrp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmrp")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn scenario(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

const SMALL_EX2: &str = r#"
seed = 42
[preset]
name = "example2"
[run]
n_paths = 4000
times = [1.0, 5.0]
permutations = 19
"#;

#[test]
fn example2_passes_and_reports_mixed_premiums() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = cmrp(&["example", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("premium.csv"));
    let mixed = rows.iter().find(|r| &r[0] == "mixed").unwrap();
    let p_p: f64 = mixed[3].parse().unwrap();
    let p_q: f64 = mixed[4].parse().unwrap();
    assert!((p_p - 3.0 / 3.6).abs() < 1e-8, "{p_p}");
    assert!((p_q - 3.0 / (2.5 * 0.8)).abs() < 1e-8, "{p_q}");
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["exit_code"], 0);
}

#[test]
fn mutated_tilt_fails_the_martingale_check() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL_EX2.replace("[run]", "[tilt]\nalpha_shift = 0.1\n[run]").replace("4000", "20000");
    let cfg = scenario(tmp.path(), "m.toml", &text);
    let out = tmp.path().join("out");
    let o = cmrp(&["martingale", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
    let rows = csv_rows(&out.join("checks.csv"));
    assert!(rows.iter().any(|r| &r[0] == "martingale_unit_mean" && &r[6] == "false"));
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        ("zero.toml", SMALL_EX2.replace("4000", "0")),
        ("unknown.toml", SMALL_EX2.replace("[run]", "[run]\nn_pahts = 3")),
        ("dup.toml", SMALL_EX2.replace("seed = 42", "seed = 42\nseed = 43")),
        ("noseed.toml", SMALL_EX2.replace("seed = 42", "")),
        ("preset.toml", SMALL_EX2.replace("example2", "example9")),
    ];
    for (name, text) in cases {
        let cfg = scenario(tmp.path(), name, &text);
        let o = cmrp(&["validate", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{name}");
        assert!(!o.stderr.is_empty(), "{name}");
    }
    assert_eq!(code(&cmrp(&["martingale"])), 2);
    let cfg = scenario(tmp.path(), "ok.toml", SMALL_EX2);
    assert_eq!(code(&cmrp(&["example", "2", "--config", &cfg])), 2);
    assert_eq!(code(&cmrp(&["example", "7"])), 2);
}

#[test]
fn every_error_is_reported_at_once() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL_EX2.replace("4000", "0").replace("permutations = 19", "permutations = 0").replace("seed = 42", "");
    let cfg = scenario(tmp.path(), "bad.toml", &text);
    let o = cmrp(&["validate", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    for needle in ["seed", "n_paths", "permutations"] {
        assert!(err.contains(needle), "{needle} missing from:\n{err}");
    }
}

#[test]
fn output_is_reproducible_across_runs_and_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(tmp.path(), "s.toml", SMALL_EX2);
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "8", "8"].iter().enumerate() {
        let out = tmp.path().join(format!("o{i}"));
        let o = cmrp(&["martingale", "--config", &cfg, "--threads", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        outputs.push((fs::read(out.join("checks.csv")).unwrap(), fs::read(out.join("summary.json")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);

    let out = tmp.path().join("other");
    cmrp(&["martingale", "--config", &cfg, "--seed", "43", "--out", out.to_str().unwrap()]);
    assert_ne!(fs::read(out.join("checks.csv")).unwrap(), outputs[0].0);
}

#[test]
fn ruin_on_the_exponential_model_matches_its_oracle() {
    let tmp = TempDir::new().unwrap();
    let text = "seed = 7\n[preset]\nname = \"exp-exp-ruin\"\n[run]\nn_paths = 3000\nu = [0.5, 2.0]\n";
    let cfg = scenario(tmp.path(), "r.toml", text);
    let out = tmp.path().join("out");
    let o = cmrp(&["ruin", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("ruin.csv"));
    assert_eq!(rows.len(), 2);
    for r in rows {
        let (psi, se, oracle): (f64, f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap(), r[6].parse().unwrap());
        assert!((psi - oracle).abs() <= 4.0 * se, "{psi} ± {se} vs {oracle}");
    }
}

#[test]
fn json_format_keeps_everything_in_the_summary() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(tmp.path(), "s.toml", SMALL_EX2);
    let out = tmp.path().join("out");
    let o = cmrp(&["simulate", "--config", &cfg, "--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec!["summary.json"]);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["tables"]["paths"].as_array().is_some_and(|rows| !rows.is_empty()));
}
