use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::report::Report;
use crate::error::{Error, Result};
use crate::numerics::wilson_interval;
use crate::testers::Verdict;

/// 95% two-sided normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub visible: String,
    pub hidden: String,
    pub oracle: String,
    pub tester: String,
    pub eps: f64,
    pub budget_scale: f64,
    pub reports: usize,
    pub trials: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub accept_rate: Option<f64>,
    pub accept_low: Option<f64>,
    pub accept_high: Option<f64>,
    pub queries_p50: u64,
    pub queries_p90: u64,
    pub queries_max: u64,
    /// Largest measured-to-budget query ratio.
    pub budget_ratio_max: Option<f64>,
    pub kl: Option<f64>,
    pub mean_estimate: Option<f64>,
    pub mean_abs_error: Option<f64>,
    pub within_eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub groups: Vec<GroupSummary>,
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[u64], p: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (p * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

type Key = (String, String, String, String, u64, u64);

/// Pool reports that share a configuration (seeds aside) and aggregate them.
pub fn summarize<P: AsRef<Path>>(paths: &[P]) -> Result<Summary> {
    let mut groups: BTreeMap<Key, Vec<Report>> = BTreeMap::new();
    let mut version = None;
    for path in paths {
        let report = Report::read(path.as_ref())?;
        let v = report.header.schema_version;
        if *version.get_or_insert(v) != v {
            return Err(Error::SchemaMismatch(format!("{}: schema version {v} mixed with another", path.as_ref().display())));
        }
        let c = &report.header.config;
        let key = (
            c.visible.clone(),
            c.hidden.clone(),
            c.oracle.to_string(),
            c.tester.to_string(),
            c.eps.to_bits(),
            c.budget_scale.to_bits(),
        );
        groups.entry(key).or_default().push(report);
    }
    let groups = groups.into_iter().map(|(key, reports)| aggregate(key, &reports)).collect();
    Ok(Summary { groups })
}

fn aggregate(key: Key, reports: &[Report]) -> GroupSummary {
    let rows: Vec<_> = reports.iter().flat_map(|r| &r.rows).collect();
    let accepted = rows.iter().filter(|r| r.verdict == Some(Verdict::Equal)).count() as u64;
    let rejected = rows.iter().filter(|r| r.verdict == Some(Verdict::Far)).count() as u64;
    let decided = accepted + rejected;
    let (low, high) = wilson_interval(accepted, decided, Z95);
    let mut totals: Vec<u64> = rows.iter().map(|r| r.total).collect();
    totals.sort_unstable();
    let budget_ratio_max = rows
        .iter()
        .filter_map(|r| r.budget.filter(|b| *b > 0.0).map(|b| r.total as f64 / b))
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
    let kl = reports[0].header.resolved.kl;
    let eps = f64::from_bits(key.4);
    let estimates: Vec<f64> = rows.iter().filter_map(|r| r.estimate).collect();
    let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let errors: Vec<f64> = kl.map(|kl| estimates.iter().map(|e| (e - kl).abs()).collect()).unwrap_or_default();
    GroupSummary {
        visible: key.0,
        hidden: key.1,
        oracle: key.2,
        tester: key.3,
        eps,
        budget_scale: f64::from_bits(key.5),
        reports: reports.len(),
        trials: rows.len() as u64,
        accepted,
        rejected,
        accept_rate: (decided > 0).then(|| accepted as f64 / decided as f64),
        accept_low: (decided > 0).then_some(low),
        accept_high: (decided > 0).then_some(high),
        queries_p50: quantile(&totals, 0.5),
        queries_p90: quantile(&totals, 0.9),
        queries_max: totals.last().copied().unwrap_or(0),
        budget_ratio_max,
        kl,
        mean_estimate: mean(&estimates),
        mean_abs_error: mean(&errors),
        within_eps: (!errors.is_empty())
            .then(|| errors.iter().filter(|&&e| e <= eps).count() as f64 / errors.len() as f64),
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

impl Summary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            let _ = writeln!(out, "{} vs {} [{} / {}] eps={} scale={}", g.visible, g.hidden, g.tester, g.oracle, g.eps, g.budget_scale);
            let _ = writeln!(out, "  reports {}  trials {}  accepted {}  rejected {}", g.reports, g.trials, g.accepted, g.rejected);
            if let Some(rate) = g.accept_rate {
                let _ = writeln!(
                    out,
                    "  accept rate {:.3}  95% CI [{}, {}]",
                    rate,
                    opt(g.accept_low, 3),
                    opt(g.accept_high, 3)
                );
            }
            let _ = writeln!(
                out,
                "  queries p50 {}  p90 {}  max {}  max/budget {}",
                g.queries_p50,
                g.queries_p90,
                g.queries_max,
                opt(g.budget_ratio_max, 4)
            );
            if g.mean_estimate.is_some() {
                let _ = writeln!(
                    out,
                    "  KL {}  mean estimate {}  mean |error| {}  within eps {}",
                    opt(g.kl, 4),
                    opt(g.mean_estimate, 4),
                    opt(g.mean_abs_error, 4),
                    opt(g.within_eps, 3)
                );
            }
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for g in &self.groups {
            w.serialize(g).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
