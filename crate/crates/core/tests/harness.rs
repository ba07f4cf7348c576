use std::path::{Path, PathBuf};

use condtest_core::harness::{run, summarize, ExperimentConfig, Report, TesterKind, SCHEMA_VERSION};
use condtest_core::{Error, ModelFile, ModelSpec, OracleMode, SubcubeBadSpec};

fn write_model(dir: &Path, name: &str, model: &ModelSpec) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, ModelFile::from_model(model).to_json()).unwrap();
    path
}

struct Fixture {
    dir: tempfile::TempDir,
    uniform: PathBuf,
    bad: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let uniform = write_model(dir.path(), "uniform.json", &ModelSpec::uniform(6, 2).unwrap());
    let spec = SubcubeBadSpec::new(6, vec![1], vec![0, 1, 1, 0, 1, 0]).unwrap();
    let bad = write_model(dir.path(), "bad.json", &ModelSpec::subcube_bad(spec));
    Fixture { dir, uniform, bad }
}

fn config(visible: &Path, hidden: &Path, oracle: OracleMode, tester: TesterKind, trials: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(visible, hidden, oracle, tester);
    c.trials = trials;
    c.seed = 42;
    c.parallelism = 1;
    c
}

#[test]
fn null_battery_accepts() {
    let f = fixture();
    let mut c = config(&f.uniform, &f.uniform, OracleMode::Coordinate, TesterKind::CoordinateKl, 30);
    let out = f.dir.path().join("null.ndjson");
    c.output = Some(out.clone());
    let report = run(&c).unwrap();
    assert_eq!(report.rows.len(), 30);
    assert!(report.footer.accepted >= 20, "{:?}", report.footer);
    assert_eq!(report.footer.kl, Some(0.0));
    for (t, row) in report.rows.iter().enumerate() {
        assert_eq!(row.trial, t as u64);
        assert_eq!(row.seed, 42 + t as u64);
        assert_eq!(row.total, row.general + row.coordinate + row.subcube + row.pairwise);
        assert!(row.total as f64 <= row.budget.unwrap());
    }
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 32);
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 31);
    assert!(csv.starts_with("trial,seed,verdict"));
    let back = Report::read(&out).unwrap();
    assert_eq!(back.rows, report.rows);
    assert_eq!(back.header.schema_version, SCHEMA_VERSION);
}

#[test]
fn subcube_bad_battery_rejects() {
    let f = fixture();
    for (oracle, tester) in [
        (OracleMode::Coordinate, TesterKind::CoordinateKl),
        (OracleMode::Subcube, TesterKind::SubcubeKl),
        (OracleMode::Subcube, TesterKind::SubcubeApprox),
    ] {
        let c = config(&f.uniform, &f.bad, oracle, tester, 20);
        let report = run(&c).unwrap();
        assert!(report.footer.rejected >= 14, "{tester}: {:?}", report.footer);
        assert!((report.footer.kl.unwrap() - 5.0 * 2f64.ln() / 2.0).abs() < 1e-12);
    }
}

#[test]
fn tv_battery() {
    let f = fixture();
    let mut c = config(&f.uniform, &f.bad, OracleMode::Coordinate, TesterKind::CoordinateTv, 10);
    c.eps = 0.4;
    let report = run(&c).unwrap();
    assert!(report.footer.rejected >= 7, "{:?}", report.footer);
}

#[test]
fn estimate_battery_records_truth() {
    let f = fixture();
    let mu = write_model(f.dir.path(), "mu.json", &ModelSpec::product_iid(3, &[0.5, 0.5]).unwrap());
    let pi = write_model(f.dir.path(), "pi.json", &ModelSpec::product_iid(3, &[0.3, 0.7]).unwrap());
    let mut c = config(&mu, &pi, OracleMode::Subcube, TesterKind::KlEstimate, 6);
    c.eps = 0.3;
    c.budget_scale = 0.02;
    let report = run(&c).unwrap();
    let truth = 3.0 * (0.3 * (0.6f64).ln() + 0.7 * (1.4f64).ln());
    assert!((report.footer.kl.unwrap() - truth).abs() < 1e-12);
    assert!(report.footer.mean_abs_error.unwrap() <= 0.3, "{:?}", report.footer);
    assert!(report.rows.iter().all(|r| r.verdict.is_none() && r.estimate.is_some()));
    assert!(report.rows.iter().all(|r| r.total as f64 <= r.budget.unwrap()));
}

#[test]
fn capability_matrix() {
    let f = fixture();
    let cases = [
        (OracleMode::General, TesterKind::CoordinateKl, false),
        (OracleMode::Pairwise, TesterKind::CoordinateTv, false),
        (OracleMode::Coordinate, TesterKind::SubcubeKl, false),
        (OracleMode::Coordinate, TesterKind::KlEstimate, false),
        (OracleMode::Subcube, TesterKind::CoordinateKl, true),
        (OracleMode::Subcube, TesterKind::SubcubeApprox, true),
    ];
    for (oracle, tester, ok) in cases {
        let r = config(&f.uniform, &f.uniform, oracle, tester, 1).validate();
        match (ok, r) {
            (true, Ok(())) => {}
            (false, Err(Error::IncompatibleMode { .. })) => {}
            (_, other) => panic!("{oracle} {tester}: {other:?}"),
        }
    }
}

#[test]
fn config_errors_name_the_field() {
    let f = fixture();
    let mut c = config(&f.uniform, &f.uniform, OracleMode::Coordinate, TesterKind::CoordinateKl, 0);
    assert!(matches!(run(&c), Err(Error::Config { field, .. }) if field == "trials"));
    c.trials = 1;
    c.eps = -1.0;
    assert!(matches!(run(&c), Err(Error::Config { field, .. }) if field == "eps"));
    c.eps = 1.0;
    c.visible = f.dir.path().join("missing.json");
    assert!(matches!(run(&c), Err(Error::Config { field, .. }) if field == "visible"));
    let other = write_model(f.dir.path(), "small.json", &ModelSpec::uniform(3, 2).unwrap());
    let c = config(&f.uniform, &other, OracleMode::Coordinate, TesterKind::CoordinateKl, 1);
    assert!(matches!(run(&c), Err(Error::Config { field, .. }) if field == "hidden"));
}

#[test]
fn parallel_and_serial_rows_agree() {
    let f = fixture();
    let mut c = config(&f.uniform, &f.bad, OracleMode::Coordinate, TesterKind::CoordinateKl, 12);
    c.budget_scale = 0.3;
    let serial = run(&c).unwrap();
    c.parallelism = 3;
    let parallel = run(&c).unwrap();
    let untimed = |r: &Report| r.rows.iter().map(|x| x.untimed()).collect::<Vec<_>>();
    assert_eq!(untimed(&serial), untimed(&parallel));
    assert_eq!(serial.footer, parallel.footer);
}

#[test]
fn summarize_pools_seeds() {
    let f = fixture();
    let mut paths = Vec::new();
    for seed in [1, 2] {
        let mut c = config(&f.uniform, &f.uniform, OracleMode::Coordinate, TesterKind::CoordinateKl, 10);
        c.seed = seed;
        c.budget_scale = 0.3;
        let out = f.dir.path().join(format!("s{seed}.ndjson"));
        c.output = Some(out.clone());
        run(&c).unwrap();
        paths.push(out);
    }
    let one = summarize(&paths[..1]).unwrap();
    assert_eq!(one.groups.len(), 1);
    let g = &one.groups[0];
    let report = Report::read(&paths[0]).unwrap();
    assert_eq!(g.trials, 10);
    assert_eq!(g.accepted, report.footer.accepted);
    assert_eq!(g.queries_max, report.rows.iter().map(|r| r.total).max().unwrap());

    let both = summarize(&paths).unwrap();
    assert_eq!(both.groups.len(), 1);
    let g = &both.groups[0];
    assert_eq!(g.reports, 2);
    assert_eq!(g.trials, 20);
    let (lo, hi) = (g.accept_low.unwrap(), g.accept_high.unwrap());
    assert!(lo <= g.accept_rate.unwrap() && g.accept_rate.unwrap() <= hi);
    assert!(g.budget_ratio_max.unwrap() <= 1.0);
    assert!(both.to_text().contains("accept rate"));
    assert_eq!(both.to_csv().unwrap().lines().count(), 2);
}

#[test]
fn summarize_rejects_other_schemas() {
    let f = fixture();
    let mut c = config(&f.uniform, &f.uniform, OracleMode::Coordinate, TesterKind::CoordinateKl, 2);
    c.budget_scale = 0.2;
    let out = f.dir.path().join("a.ndjson");
    c.output = Some(out.clone());
    run(&c).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    let old = f.dir.path().join("old.ndjson");
    let needle = format!("\"schema_version\":{SCHEMA_VERSION}");
    assert!(text.contains(&needle));
    std::fs::write(&old, text.replacen(&needle, "\"schema_version\":0", 1)).unwrap();
    assert!(matches!(summarize(&[out.clone(), old]), Err(Error::SchemaMismatch(_))));
    let junk = f.dir.path().join("junk.ndjson");
    std::fs::write(&junk, "{\"hello\":1}\n").unwrap();
    assert!(matches!(summarize(&[junk]), Err(Error::SchemaMismatch(_))));
}
