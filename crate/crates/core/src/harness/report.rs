use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, TesterKind};
use crate::error::{Error, Result};
use crate::oracles::{Backend, OracleMode, QueryCounts};
use crate::testers::{Perturbation, Verdict};

/// The configuration as recorded in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub visible: String,
    pub hidden: String,
    pub oracle: OracleMode,
    pub tester: TesterKind,
    pub eps: f64,
    pub trials: u64,
    pub seed: u64,
    pub budget_scale: f64,
    pub parallelism: usize,
    pub backend: Backend,
    pub c: Option<f64>,
    pub eta: Option<f64>,
    pub b: Option<f64>,
    pub perturbation: Perturbation,
}

impl From<&ExperimentConfig> for ConfigEcho {
    fn from(c: &ExperimentConfig) -> Self {
        Self {
            visible: c.visible.display().to_string(),
            hidden: c.hidden.display().to_string(),
            oracle: c.oracle,
            tester: c.tester,
            eps: c.eps,
            trials: c.trials,
            seed: c.seed,
            budget_scale: c.budget_scale,
            parallelism: c.parallelism,
            backend: c.backend,
            c: c.c,
            eta: c.eta,
            b: c.b,
            perturbation: c.perturbation,
        }
    }
}

/// Parameters filled in from the models, and the exact distances when they
/// could be computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub c: Option<f64>,
    pub eta: Option<f64>,
    pub b: Option<f64>,
    /// `KL(hidden || visible)`.
    pub kl: Option<f64>,
    pub kl_infinite: bool,
    pub tv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub schema_version: u32,
    pub crate_version: String,
    pub constants_digest: String,
    pub config: ConfigEcho,
    pub visible_variant: String,
    pub hidden_variant: String,
    pub n: usize,
    pub k: usize,
    pub resolved: Resolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub trial: u64,
    pub seed: u64,
    pub verdict: Option<Verdict>,
    pub reason: Option<String>,
    pub estimate: Option<f64>,
    pub support_violation: bool,
    pub general: u64,
    pub coordinate: u64,
    pub subcube: u64,
    pub pairwise: u64,
    pub total: u64,
    /// Query budget the run is held to, when one applies.
    pub budget: Option<f64>,
    pub wall_ms: f64,
}

impl Row {
    pub(super) fn new(trial: u64, seed: u64, budget: Option<f64>) -> Self {
        Self {
            trial,
            seed,
            verdict: None,
            reason: None,
            estimate: None,
            support_violation: false,
            general: 0,
            coordinate: 0,
            subcube: 0,
            pairwise: 0,
            total: 0,
            budget,
            wall_ms: 0.0,
        }
    }

    pub(super) fn set_counts(&mut self, c: QueryCounts) {
        self.general = c.general;
        self.coordinate = c.coordinate;
        self.subcube = c.subcube;
        self.pairwise = c.pairwise;
        self.total = c.total();
    }

    pub fn counts(&self) -> QueryCounts {
        QueryCounts { general: self.general, coordinate: self.coordinate, subcube: self.subcube, pairwise: self.pairwise }
    }

    /// The row with its timing field cleared, for reproducibility checks.
    pub fn untimed(&self) -> Row {
        Row { wall_ms: 0.0, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footer {
    pub trials: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub support_violations: u64,
    /// Exact `KL(hidden || visible)` and TV, repeated from the header.
    pub kl: Option<f64>,
    pub kl_infinite: bool,
    pub tv: Option<f64>,
    pub mean_estimate: Option<f64>,
    pub mean_abs_error: Option<f64>,
    /// Fraction of estimates within `eps` of the exact KL.
    pub within_eps: Option<f64>,
}

impl Footer {
    pub fn from_rows(rows: &[Row], resolved: &Resolved, eps: f64) -> Self {
        let count = |v| rows.iter().filter(|r| r.verdict == Some(v)).count() as u64;
        let estimates: Vec<f64> = rows.iter().filter_map(|r| r.estimate).collect();
        let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
        let errors: Option<Vec<f64>> = resolved.kl.map(|kl| estimates.iter().map(|e| (e - kl).abs()).collect());
        Self {
            trials: rows.len() as u64,
            accepted: count(Verdict::Equal),
            rejected: count(Verdict::Far),
            support_violations: rows.iter().filter(|r| r.support_violation).count() as u64,
            kl: resolved.kl,
            kl_infinite: resolved.kl_infinite,
            tv: resolved.tv,
            mean_estimate: mean(&estimates),
            mean_abs_error: errors.as_deref().and_then(mean),
            within_eps: errors
                .as_deref()
                .filter(|e| !e.is_empty())
                .map(|e| e.iter().filter(|&&x| x <= eps).count() as f64 / e.len() as f64),
        }
    }
}

/// One NDJSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum Record {
    Header(Header),
    Row(Row),
    Footer(Footer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub header: Header,
    pub rows: Vec<Row>,
    pub footer: Footer,
}

impl Report {
    /// Parse an NDJSON report, checking the schema version.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines.next().ok_or_else(|| Error::SchemaMismatch(format!("{}: empty report", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(first)?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if value.get("record").and_then(|v| v.as_str()) != Some("header") || version != Some(super::SCHEMA_VERSION as u64) {
            return Err(Error::SchemaMismatch(format!(
                "{}: expected a version {} header, found {}",
                path.display(),
                super::SCHEMA_VERSION,
                version.map_or("none".to_string(), |v| v.to_string())
            )));
        }
        let mismatch = |e: serde_json::Error| Error::SchemaMismatch(format!("{}: {e}", path.display()));
        let header = match serde_json::from_value(value).map_err(mismatch)? {
            Record::Header(h) => h,
            _ => unreachable!("checked record tag"),
        };
        let mut rows = Vec::new();
        let mut footer = None;
        for line in lines {
            match serde_json::from_str(line).map_err(mismatch)? {
                Record::Row(r) => rows.push(r),
                Record::Footer(f) => footer = Some(f),
                Record::Header(_) => return Err(Error::SchemaMismatch(format!("{}: second header", path.display()))),
            }
        }
        let footer = footer.ok_or_else(|| Error::SchemaMismatch(format!("{}: no footer", path.display())))?;
        Ok(Self { header, rows, footer })
    }
}

/// CSV columns: the row fields without the reason text.
#[derive(Serialize)]
struct CsvRow<'a> {
    trial: u64,
    seed: u64,
    verdict: Option<&'static str>,
    reason: Option<&'a str>,
    estimate: Option<f64>,
    support_violation: bool,
    general: u64,
    coordinate: u64,
    subcube: u64,
    pairwise: u64,
    total: u64,
    budget: Option<f64>,
    wall_ms: f64,
}

impl<'a> From<&'a Row> for CsvRow<'a> {
    fn from(r: &'a Row) -> Self {
        Self {
            trial: r.trial,
            seed: r.seed,
            verdict: r.verdict.map(|v| if v.is_far() { "far" } else { "equal" }),
            reason: r.reason.as_deref(),
            estimate: r.estimate,
            support_violation: r.support_violation,
            general: r.general,
            coordinate: r.coordinate,
            subcube: r.subcube,
            pairwise: r.pairwise,
            total: r.total,
            budget: r.budget,
            wall_ms: r.wall_ms,
        }
    }
}

/// Streams a report: NDJSON to the given path and a CSV projection of the
/// rows to the same path with a `.csv` extension.
pub struct ReportWriter {
    ndjson: BufWriter<File>,
    csv: csv::Writer<File>,
}

pub fn csv_path(path: &Path) -> PathBuf {
    path.with_extension("csv")
}

fn record_line<W: Write>(w: &mut W, record: &Record) -> Result<()> {
    serde_json::to_writer(&mut *w, record)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

impl ReportWriter {
    pub fn create(path: &Path, header: &Header) -> Result<Self> {
        if csv_path(path) == path {
            return Err(Error::Config { field: "output".into(), reason: "report path must not end in .csv".into() });
        }
        let mut ndjson = BufWriter::new(File::create(path)?);
        record_line(&mut ndjson, &Record::Header(header.clone()))?;
        let csv = csv::Writer::from_writer(File::create(csv_path(path))?);
        Ok(Self { ndjson, csv })
    }

    pub fn row(&mut self, row: &Row) -> Result<()> {
        record_line(&mut self.ndjson, &Record::Row(row.clone()))?;
        self.csv.serialize(CsvRow::from(row)).map_err(csv_error)
    }

    pub fn finish(mut self, footer: &Footer) -> Result<()> {
        record_line(&mut self.ndjson, &Record::Footer(footer.clone()))?;
        self.ndjson.flush()?;
        self.csv.flush()?;
        Ok(())
    }
}
