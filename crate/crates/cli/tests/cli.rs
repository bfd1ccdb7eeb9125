use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn heatcloak(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatcloak"))
        .args(args)
        .env_remove("HEATCLOAK_OUT")
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn example_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/paper-2d.toml")
}

fn error_record(out: &Output) -> serde_json::Value {
    let line = String::from_utf8_lossy(&out.stderr)
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .expect("JSON error record on stderr")
        .to_string();
    serde_json::from_str(&line).unwrap()
}

fn hash_dir(dir: &Path) -> BTreeMap<String, String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let digest = Sha256::digest(std::fs::read(&p).unwrap());
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            (p.file_name().unwrap().to_string_lossy().into_owned(), hex)
        })
        .collect()
}

#[test]
fn help_lists_subcommands_and_flags() {
    let out = heatcloak(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["coeffs", "eigen", "simulate", "cloakgap", "layered", "checkmap"] {
        assert!(text.contains(sub), "missing {sub}");
    }
    let out = heatcloak(&["cloakgap", "--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for flag in ["--scenario", "--preset", "--out", "--eps", "--n-bulk", "--dt", "--t-final", "--dry-run"] {
        assert!(text.contains(flag), "missing {flag}");
    }
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let scenario = example_scenario();
    let out = heatcloak(&[
        "cloakgap",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--dry-run",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out_dir.exists());
}

#[test]
fn malformed_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[grid]\nn_bulk = \"many\"\n").unwrap();
    let out = heatcloak(&["cloakgap", "--scenario", path.to_str().unwrap(), "--dry-run"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"], "config");

    std::fs::write(&path, "[grid]\nunknown_key = 1\n").unwrap();
    let out = heatcloak(&["cloakgap", "--scenario", path.to_str().unwrap(), "--dry-run"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenario_and_preset_together_is_a_config_error() {
    let scenario = example_scenario();
    let out = heatcloak(&["coeffs", "--scenario", scenario.to_str().unwrap(), "--preset", "decay-2d", "--dry-run"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_budget_exits_4() {
    let out = heatcloak(&["cloakgap", "--eps", "1e-3", "--max-cells", "10", "--dry-run"]);
    assert_eq!(out.status.code(), Some(4));
    let record = error_record(&out);
    assert_eq!(record["error"], "infeasible-budget");
    assert_eq!(record["exit_code"], 4);
}

#[test]
fn out_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_heatcloak"))
        .args(["coeffs", "--eps", "0.1", "--points", "11"])
        .env("HEATCLOAK_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("coefficient_profiles.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    assert!(dir.path().join("scenario.toml").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = heatcloak(&[
            "cloakgap",
            "--eps",
            "0.1",
            "--n-bulk",
            "30",
            "--t-final",
            "2",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        hash_dir(&out_dir)
    };
    let a = run("a");
    let b = run("b");
    assert!(a.len() > 1);
    assert_eq!(a, b);
}
