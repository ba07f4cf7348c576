use std::path::Path;
use std::process::{Command, Output};

fn condtest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_condtest")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = condtest(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path.display().to_string()
}

const UNIFORM: &str = r#"{"variant": "Uniform", "n": 6, "k": 2}"#;

#[test]
fn adversary_then_test_then_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let uniform = write(d, "uniform.json", UNIFORM);
    let bad = d.join("bad.json").display().to_string();
    ok(&["adversary", "gen", "--family", "subcube-bad", "--n", "10", "--eps", "1", "--seed", "3", "--out", &bad]);
    let text = std::fs::read_to_string(&bad).unwrap();
    assert!(text.contains("SubcubeBad"), "{text}");
    std::fs::write(&uniform, r#"{"variant": "Uniform", "n": 10, "k": 2}"#).unwrap();

    let report = d.join("run.ndjson").display().to_string();
    let args = [
        "test", "--visible", &uniform, "--hidden", &bad, "--oracle", "coordinate", "--tester", "coordinate-kl", "--eps",
        "1", "--trials", "6", "--seed", "9", "--budget-scale", "0.3", "--parallelism", "1", "--out", &report,
    ];
    let stdout = ok(&args);
    assert!(stdout.contains("rejected"), "{stdout}");
    assert_eq!(std::fs::read_to_string(&report).unwrap().lines().count(), 8);
    assert!(d.join("run.csv").exists());

    let again = d.join("again.ndjson").display().to_string();
    let mut rerun = args;
    *rerun.last_mut().unwrap() = &again;
    ok(&rerun);
    let rows = |p: &str| -> Vec<String> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| l.contains("\"record\":\"row\""))
            .map(|l| l.split("\"wall_ms\"").next().unwrap().to_string())
            .collect()
    };
    assert_eq!(rows(&report), rows(&again));

    let table = d.join("table.csv").display().to_string();
    let summary = ok(&["summarize", &report, &again, "--csv", &table]);
    assert!(summary.contains("trials 12"), "{summary}");
    assert_eq!(std::fs::read_to_string(&table).unwrap().lines().count(), 2);
}

#[test]
fn estimate_kl_reports_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mu = write(d, "mu.json", r#"{"variant": "Product", "n": 3, "k": 2, "coords": [[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]]}"#);
    let pi = write(d, "pi.json", r#"{"variant": "Product", "n": 3, "k": 2, "coords": [[0.3, 0.7], [0.3, 0.7], [0.3, 0.7]]}"#);
    let stdout = ok(&[
        "estimate-kl", "--visible", &mu, "--hidden", &pi, "--eps", "0.3", "--trials", "3", "--budget-scale", "0.02",
        "--parallelism", "1",
    ]);
    assert!(stdout.contains("mean |error|"), "{stdout}");
}

#[test]
fn matched_ising_generation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json").display().to_string();
    ok(&["adversary", "gen", "--family", "matched-ising", "--n", "8", "--eps", "0.3", "--matching", "consecutive", "--out", &out]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("beta"), "{text}");
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let uniform = write(d, "uniform.json", UNIFORM);
    let out = condtest(&[
        "test", "--visible", &uniform, "--hidden", &uniform, "--oracle", "coordinate", "--tester", "subcube-kl", "--eps", "1",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("subcube"));

    let missing = d.join("missing.json").display().to_string();
    let out = condtest(&[
        "test", "--visible", &missing, "--hidden", &uniform, "--oracle", "coordinate", "--tester", "coordinate-kl", "--eps", "1",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("visible"));

    let out = condtest(&["adversary", "gen", "--family", "subcube-bad", "--n", "8", "--eps", "1", "--out", &missing]);
    assert!(!out.status.success());

    let junk = write(d, "junk.ndjson", "{}\n");
    assert!(!condtest(&["summarize", &junk]).status.success());
}

#[test]
fn bad_constants_override_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let uniform = write(dir.path(), "uniform.json", UNIFORM);
    let broken = write(dir.path(), "constants.toml", "version = 1\n");
    let out = Command::new(env!("CARGO_BIN_EXE_condtest"))
        .env("CONDTEST_CONSTANTS", &broken)
        .args(["test", "--visible", &uniform, "--hidden", &uniform, "--oracle", "coordinate", "--tester", "coordinate-kl", "--eps", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("constants"));
}
