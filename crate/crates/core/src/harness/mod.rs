//! Seeded trial batteries over model files, with NDJSON and CSV reports.

mod report;
mod summary;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::at_tester::{coordinate_query_budget, identity_test_coordinate, identity_test_tv, AtParameters, TestRun};
use crate::constants::constants;
use crate::error::{Error, Result};
use crate::models::{balance_profile, check_guard, dobrushin_certificate, kl_divergence, tv_distance, ModelFile};
use crate::models::{ModelSpec, Variant};
use crate::oracles::{Backend, OracleHandle, OracleMode, Query};
use crate::rng::{trial_rngs, trial_seed};
use crate::subcube::{
    estimate_kl_global, identity_test_subcube, planned_estimation_queries, ExactPrefixProvider, MillerMadow,
    SubcubeParameters,
};
use crate::testers::Perturbation;

pub use report::{ConfigEcho, Footer, Header, Record, Report, ReportWriter, Resolved, Row};
pub use summary::{summarize, GroupSummary, Summary};

/// Version of the report record layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Rows buffered between the trial workers and the writer.
const QUEUE_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TesterKind {
    CoordinateKl,
    CoordinateTv,
    SubcubeKl,
    SubcubeApprox,
    KlEstimate,
}

impl TesterKind {
    pub const ALL: [TesterKind; 5] =
        [Self::CoordinateKl, Self::CoordinateTv, Self::SubcubeKl, Self::SubcubeApprox, Self::KlEstimate];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CoordinateKl => "coordinate-kl",
            Self::CoordinateTv => "coordinate-tv",
            Self::SubcubeKl => "subcube-kl",
            Self::SubcubeApprox => "subcube-approx",
            Self::KlEstimate => "kl-estimate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// Oracle access the tester needs beyond general samples.
    pub fn needs(self) -> Query {
        match self {
            Self::CoordinateKl | Self::CoordinateTv => Query::Coordinate,
            Self::SubcubeKl | Self::SubcubeApprox | Self::KlEstimate => Query::Subcube,
        }
    }
}

impl fmt::Display for TesterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `Ok` when `mode` grants what `tester` needs.
pub fn check_mode(tester: TesterKind, mode: OracleMode) -> Result<()> {
    let needs = tester.needs();
    if mode.permits(needs) {
        return Ok(());
    }
    let needs = match needs {
        Query::Coordinate => "coordinate",
        _ => "subcube",
    };
    Err(Error::IncompatibleMode { tester: tester.to_string(), needs: needs.into(), mode: mode.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub visible: PathBuf,
    pub hidden: PathBuf,
    pub oracle: OracleMode,
    pub tester: TesterKind,
    pub eps: f64,
    pub trials: u64,
    pub seed: u64,
    pub budget_scale: f64,
    /// NDJSON report path; the CSV projection goes next to it.
    pub output: Option<PathBuf>,
    pub parallelism: usize,
    pub backend: Backend,
    /// Tensorization constant for the coordinate testers.
    pub c: Option<f64>,
    /// Balance of the visible distribution.
    pub eta: Option<f64>,
    /// Prefix marginal bound for the subcube algorithms.
    pub b: Option<f64>,
    /// Approximation scheme simulated by `subcube-approx`.
    pub perturbation: Perturbation,
}

impl ExperimentConfig {
    pub fn new(visible: impl Into<PathBuf>, hidden: impl Into<PathBuf>, oracle: OracleMode, tester: TesterKind) -> Self {
        Self {
            visible: visible.into(),
            hidden: hidden.into(),
            oracle,
            tester,
            eps: 1.0,
            trials: 100,
            seed: 0,
            budget_scale: 1.0,
            output: None,
            parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            backend: Backend::Structural,
            c: None,
            eta: None,
            b: None,
            perturbation: Perturbation::Random,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::Config { field: field.into(), reason: reason.into() });
        if self.trials == 0 {
            return bad("trials", "must be at least 1");
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("eps", "must be positive");
        }
        if self.tester == TesterKind::CoordinateTv && self.eps > 1.0 {
            return bad("eps", "a TV distance is at most 1");
        }
        if !(self.budget_scale > 0.0 && self.budget_scale.is_finite()) {
            return bad("budget_scale", "must be positive");
        }
        if self.parallelism == 0 {
            return bad("parallelism", "must be at least 1");
        }
        if matches!(self.c, Some(c) if !(c >= 1.0)) {
            return bad("c", "must be at least 1");
        }
        if matches!(self.eta, Some(e) if !(e > 0.0 && e <= 0.5)) {
            return bad("eta", "must lie in (0, 1/2]");
        }
        if matches!(self.b, Some(b) if !(b > 0.0 && b <= 0.5)) {
            return bad("b", "must lie in (0, 1/2]");
        }
        check_mode(self.tester, self.oracle)
    }
}

fn load_model(path: &Path, field: &str) -> Result<ModelSpec> {
    ModelFile::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Config { field: field.into(), reason: format!("{}: {io}", path.display()) },
        other => other,
    })
}

fn tensorization_constant(model: &ModelSpec) -> Result<f64> {
    match model.variant() {
        Variant::Uniform | Variant::Product { .. } => Ok(1.0),
        _ => dobrushin_certificate(model).map(|c| c.c).map_err(|e| Error::Config {
            field: "c".into(),
            reason: format!("no tensorization certificate for the visible model ({e}); pass one explicitly"),
        }),
    }
}

/// Exact `KL(hidden || visible)` and TV, when available.
fn ground_truth(visible: &ModelSpec, hidden: &ModelSpec) -> (Option<f64>, Option<f64>) {
    if let (Variant::Uniform, Variant::SubcubeBad(spec)) = (visible.variant(), hidden.variant()) {
        return (Some(spec.kl_to_uniform()), Some(spec.tv_to_uniform()));
    }
    if let (Variant::Uniform, Variant::MatchedIsing(spec)) = (visible.variant(), hidden.variant()) {
        let kl = spec.pairs().len() as f64 * (2f64.ln() - binary_entropy(spec.agree_prob()));
        return (Some(kl), Some(spec.tv_to_uniform()));
    }
    if check_guard(visible.n(), visible.k()).is_err() {
        return (None, None);
    }
    (kl_divergence(hidden, visible).ok(), tv_distance(hidden, visible).ok())
}

fn binary_entropy(p: f64) -> f64 {
    [p, 1.0 - p].iter().filter(|&&x| x > 0.0).map(|x| -x * x.ln()).sum()
}

/// Models and resolved parameters shared by every trial.
struct Prepared {
    config: ExperimentConfig,
    visible: Arc<ModelSpec>,
    hidden: Arc<ModelSpec>,
    resolved: Resolved,
    budget: Option<f64>,
}

impl Prepared {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let visible = load_model(&config.visible, "visible")?;
        let hidden = load_model(&config.hidden, "hidden")?;
        if visible.n() != hidden.n() || visible.k() != hidden.k() {
            return Err(Error::Config {
                field: "hidden".into(),
                reason: format!("space {}^{} differs from the visible {}^{}", hidden.k(), hidden.n(), visible.k(), visible.n()),
            });
        }
        let mut resolved = Resolved::default();
        let n = visible.n();
        let budget = match config.tester {
            TesterKind::CoordinateKl | TesterKind::CoordinateTv => {
                let c = match config.c {
                    Some(c) => c,
                    None => tensorization_constant(&visible)?,
                };
                let eta = match config.eta {
                    Some(e) => e,
                    None => balance_profile(&visible, true)?.eta,
                };
                resolved.c = Some(c);
                resolved.eta = Some(eta);
                let params = AtParameters::new(c, eta, config.eps, n)?.with_budget_scale(config.budget_scale)?;
                Some(match config.tester {
                    TesterKind::CoordinateTv => {
                        let kl = AtParameters { eps: config.eps * config.eps / 2.0, ..params };
                        coordinate_query_budget(&kl) + crate::at_tester::tv_stage_one_samples(config.eps) as f64
                    }
                    _ => coordinate_query_budget(&params),
                })
            }
            TesterKind::SubcubeKl | TesterKind::SubcubeApprox | TesterKind::KlEstimate => {
                let b = match config.b {
                    Some(b) => b,
                    None => balance_profile(&visible, true)?.b.ok_or_else(|| Error::Config {
                        field: "b".into(),
                        reason: "marginal bound of the visible model is unavailable; pass one explicitly".into(),
                    })?,
                };
                resolved.b = Some(b);
                let params = subcube_parameters(config, b)?;
                match config.tester {
                    TesterKind::SubcubeKl => Some(coordinate_query_budget(&params.schedule_parameters(n)?)),
                    TesterKind::KlEstimate => {
                        Some(planned_estimation_queries(n, visible.k(), &params, &MillerMadow::default()) as f64)
                    }
                    _ => None,
                }
            }
        };
        let (kl, tv) = ground_truth(&visible, &hidden);
        resolved.kl = kl.filter(|v| v.is_finite());
        resolved.kl_infinite = kl.is_some_and(f64::is_infinite);
        resolved.tv = tv;
        Ok(Self { config: config.clone(), visible: Arc::new(visible), hidden: Arc::new(hidden), resolved, budget })
    }

    fn header(&self) -> Header {
        Header {
            schema_version: SCHEMA_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").into(),
            constants_digest: constants().digest.clone(),
            config: ConfigEcho::from(&self.config),
            visible_variant: self.visible.variant_name().into(),
            hidden_variant: self.hidden.variant_name().into(),
            n: self.visible.n(),
            k: self.visible.k(),
            resolved: self.resolved.clone(),
        }
    }

    fn run_trial(&self, trial: u64) -> Result<Row> {
        let cfg = &self.config;
        let start = Instant::now();
        let (orng, mut arng) = trial_rngs(cfg.seed, trial);
        let mut oracle = OracleHandle::new(Arc::clone(&self.hidden), cfg.oracle, cfg.backend, orng)?;
        let n = self.visible.n();
        let mut row = Row::new(trial, trial_seed(cfg.seed, trial), self.budget);
        let from_run = |row: &mut Row, run: TestRun| {
            row.verdict = Some(run.verdict);
            row.reason = run.reason.map(|r| match r {
                crate::at_tester::RejectReason::Support => "support".to_string(),
                crate::at_tester::RejectReason::Level(l) => format!("level-{l}"),
            });
            row.set_counts(run.counts);
        };
        match cfg.tester {
            TesterKind::CoordinateKl | TesterKind::CoordinateTv => {
                let r = &self.resolved;
                let params = AtParameters::new(r.c.unwrap_or(1.0), r.eta.unwrap_or(0.5), cfg.eps, n)?
                    .with_budget_scale(cfg.budget_scale)?;
                let run = if cfg.tester == TesterKind::CoordinateKl {
                    identity_test_coordinate(&self.visible, &params, &mut oracle, &mut arng)?
                } else {
                    identity_test_tv(&self.visible, &params, &mut oracle, &mut arng)?
                };
                from_run(&mut row, run);
            }
            TesterKind::SubcubeKl | TesterKind::SubcubeApprox => {
                let params = subcube_parameters(cfg, self.resolved.b.unwrap_or(0.5))?;
                let provider = ExactPrefixProvider::new(Arc::clone(&self.visible));
                let run = identity_test_subcube(&provider, &params, &mut oracle, &mut arng)?;
                from_run(&mut row, run);
            }
            TesterKind::KlEstimate => {
                let params = subcube_parameters(cfg, self.resolved.b.unwrap_or(0.5))?;
                let provider = ExactPrefixProvider::new(Arc::clone(&self.visible));
                let est = estimate_kl_global(&provider, &params, &mut oracle, &MillerMadow::default(), &mut arng)?;
                row.estimate = est.estimate;
                row.support_violation = est.support_violation;
                row.set_counts(est.counts);
            }
        }
        debug_assert_eq!(row.total, oracle.counts().total());
        row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(row)
    }
}

fn subcube_parameters(cfg: &ExperimentConfig, b: f64) -> Result<SubcubeParameters> {
    let params = SubcubeParameters::new(b, cfg.eps)?.with_budget_scale(cfg.budget_scale)?;
    Ok(if cfg.tester == TesterKind::SubcubeApprox { params.with_approximation(cfg.perturbation) } else { params })
}

/// Run every trial of `config`, writing the report when an output path is
/// set. Rows are emitted in trial order whatever the parallelism.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    let prepared = Prepared::new(config)?;
    let header = prepared.header();
    let mut writer = match &config.output {
        Some(path) => Some(ReportWriter::create(path, &header)?),
        None => None,
    };
    let (tx, rx) = sync_channel::<Result<Row>>(QUEUE_DEPTH);
    let trials = config.trials;
    let rows = std::thread::scope(|scope| -> Result<Vec<Row>> {
        let prepared = &prepared;
        let producer = scope.spawn(move || -> Result<()> {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.parallelism)
                .build()
                .map_err(|e| Error::Config { field: "parallelism".into(), reason: e.to_string() })?;
            let _ = pool.install(|| {
                (0..trials).into_par_iter().try_for_each_with(tx, |tx, t| {
                    // A closed channel means the writer gave up; stop quietly.
                    tx.send(prepared.run_trial(t)).map_err(|_| ())
                })
            });
            Ok(())
        });
        let mut pending = BTreeMap::new();
        let mut next = 0;
        let mut rows = Vec::with_capacity(trials as usize);
        let mut failure = None;
        for row in rx {
            let row = match row {
                Ok(r) => r,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            };
            pending.insert(row.trial, row);
            while let Some(row) = pending.remove(&next) {
                if let Some(w) = writer.as_mut() {
                    w.row(&row)?;
                }
                rows.push(row);
                next += 1;
            }
        }
        producer.join().expect("trial workers panicked")?;
        match failure {
            Some(e) => Err(e),
            None => Ok(rows),
        }
    })?;
    let footer = Footer::from_rows(&rows, &prepared.resolved, config.eps);
    if let Some(w) = writer {
        w.finish(&footer)?;
    }
    Ok(Report { header, rows, footer })
}
