//! Identity testing with general and coordinate oracle access for visible
//! distributions satisfying approximate tensorization of entropy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constants::constants;
use crate::error::{range, Error, Result};
use crate::models::ModelSpec;
use crate::numerics::ceil_log2;
use crate::oracles::{OracleHandle, Query, QueryCounts};
use crate::testers::{amplify, kl_test_auto, repetitions, worst_case_samples, SampleStream, SmallDistribution, Verdict};

/// Inputs of the coordinate tester. `c` is the tensorization constant and
/// `eta` the balance of the visible distribution; both are trusted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtParameters {
    pub c: f64,
    pub eta: f64,
    pub eps: f64,
    pub n: usize,
    pub budget_scale: f64,
}

impl AtParameters {
    pub fn new(c: f64, eta: f64, eps: f64, n: usize) -> Result<Self> {
        if !(c >= 1.0 && c.is_finite()) {
            return Err(range(format!("tensorization constant {c} must be >= 1")));
        }
        if !(eta > 0.0 && eta <= 0.5) {
            return Err(range(format!("eta = {eta} outside (0, 1/2]")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(range("eps must be positive"));
        }
        if n == 0 {
            return Err(range("n must be positive"));
        }
        Ok(Self { c, eta, eps, n, budget_scale: 1.0 })
    }

    pub fn with_budget_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(range("budget scale must be positive"));
        }
        self.budget_scale = scale;
        Ok(self)
    }

    /// `eps' = eps / (C n)`.
    pub fn eps_prime(&self) -> f64 {
        self.eps / (self.c * self.n as f64)
    }
}

/// Smallest `L >= 0` with `2^L >= M / eps`. Guarantees: if `Y` lies in
/// `[0, M]` with `E[Y] >= eps`, some `l <= L` has
/// `Pr(Y >= 2^{l-1} eps) >= 1 / (2^l (L + 1))`.
pub fn reverse_markov_levels(eps: f64, m: f64) -> Result<usize> {
    if !(eps > 0.0 && m > 0.0) {
        return Err(range("eps and M must be positive"));
    }
    if m < eps {
        return Err(range(format!("M = {m} is below eps = {eps}")));
    }
    Ok(ceil_log2(m / eps).max(0) as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub index: usize,
    pub eps: f64,
    /// Pairs drawn at this level.
    pub repeats: u64,
}

/// Level plan: `eps_l = 2^{l-1} eps'`, `T_l = 2^{l+2} (L + 1)`, and the
/// per-pair failure `delta = 2^{-2L-6}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eps_prime: f64,
    pub top: usize,
    pub delta: f64,
    pub levels: Vec<Level>,
    /// Failure handed to each amplified pair test.
    pub sub_failure: f64,
}

impl Schedule {
    pub fn new(params: &AtParameters) -> Self {
        let eps_prime = params.eps_prime();
        let m = (1.0 / params.eta).ln();
        let top = if m <= eps_prime { 0 } else { reverse_markov_levels(eps_prime, m).expect("checked range") };
        let delta = 2f64.powi(-2 * top as i32 - 6);
        let levels = (0..=top)
            .map(|l| Level {
                index: l,
                eps: 2f64.powi(l as i32 - 1) * eps_prime,
                repeats: (params.budget_scale * 2f64.powi(l as i32 + 2) * (top + 1) as f64).ceil() as u64,
            })
            .collect();
        let n3 = (params.n.max(3) as f64).powi(3);
        Self { eps_prime, top, delta, levels, sub_failure: delta.min(1.0 / n3) }
    }

    /// `sum_l T_l delta` at unit budget scale.
    pub fn union_bound(&self) -> f64 {
        self.levels.iter().map(|l| 2f64.powi(l.index as i32 + 2) * (self.top + 1) as f64).sum::<f64>() * self.delta
    }

    pub fn total_pairs(&self) -> u64 {
        self.levels.iter().map(|l| l.repeats).sum()
    }
}

/// Why a run rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// A sample fell outside the visible distribution's support.
    Support,
    /// A pair test rejected at this level.
    Level(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRun {
    pub verdict: Verdict,
    pub reason: Option<RejectReason>,
    pub counts: QueryCounts,
    pub levels_visited: usize,
    pub pairs_tested: u64,
}

/// Outcome of one pair `(i, x)`.
pub(crate) enum PairOutcome {
    Pass,
    Reject,
    Unsupported,
}

/// Walk the schedule, calling `pair` once per draw; stops at the first
/// rejection.
pub(crate) fn run_schedule<F>(schedule: &Schedule, mut pair: F) -> Result<(Verdict, Option<RejectReason>, usize, u64)>
where
    F: FnMut(&Level) -> Result<PairOutcome>,
{
    let mut pairs = 0;
    for level in &schedule.levels {
        for _ in 0..level.repeats {
            pairs += 1;
            match pair(level)? {
                PairOutcome::Pass => {}
                PairOutcome::Reject => {
                    return Ok((Verdict::Far, Some(RejectReason::Level(level.index)), level.index + 1, pairs))
                }
                PairOutcome::Unsupported => return Ok((Verdict::Far, Some(RejectReason::Support), level.index + 1, pairs)),
            }
        }
    }
    Ok((Verdict::Equal, None, schedule.levels.len(), pairs))
}

fn diff(after: QueryCounts, before: QueryCounts) -> QueryCounts {
    QueryCounts {
        general: after.general - before.general,
        coordinate: after.coordinate - before.coordinate,
        subcube: after.subcube - before.subcube,
        pairwise: after.pairwise - before.pairwise,
    }
}

/// Coordinate-oracle draws of `x_i` given the rest of `x`.
pub struct CoordinateStream<'a> {
    oracle: &'a mut OracleHandle,
    i: usize,
    x: &'a [usize],
    consumed: u64,
}

impl<'a> CoordinateStream<'a> {
    pub fn new(oracle: &'a mut OracleHandle, i: usize, x: &'a [usize]) -> Self {
        Self { oracle, i, x, consumed: 0 }
    }
}

impl SampleStream for CoordinateStream<'_> {
    fn draw(&mut self) -> Result<usize> {
        self.consumed += 1;
        self.oracle.draw_coordinate_at(self.i, self.x)
    }
    fn consumed(&self) -> u64 {
        self.consumed
    }
}

fn require(oracle: &OracleHandle, q: Query, tester: &str, needs: &str) -> Result<()> {
    if oracle.mode().permits(q) {
        Ok(())
    } else {
        Err(Error::IncompatibleMode { tester: tester.into(), needs: needs.into(), mode: oracle.mode().to_string() })
    }
}

fn check_dims(mu: &ModelSpec, oracle: &OracleHandle, params: &AtParameters) -> Result<()> {
    let hidden = oracle.model();
    if hidden.n() != mu.n() || hidden.k() != mu.k() || params.n != mu.n() {
        return Err(Error::DimensionMismatch { expected: mu.n(), got: hidden.n() });
    }
    Ok(())
}

/// Decide `pi = mu` versus `KL(pi || mu) >= eps` from general and coordinate
/// queries to `pi`.
pub fn identity_test_coordinate<R: Rng>(
    mu: &ModelSpec,
    params: &AtParameters,
    oracle: &mut OracleHandle,
    rng: &mut R,
) -> Result<TestRun> {
    require(oracle, Query::Coordinate, "coordinate-kl", "coordinate")?;
    check_dims(mu, oracle, params)?;
    let before = oracle.counts();
    let schedule = Schedule::new(params);
    let n = mu.n();
    let mut x = vec![0; n];
    let mut w = vec![0.0; mu.k()];
    let (verdict, reason, levels_visited, pairs_tested) = run_schedule(&schedule, |level| {
        oracle.draw_general_into(&mut x)?;
        if !mu.is_feasible(&x) {
            return Ok(PairOutcome::Unsupported);
        }
        let i = rng.random_range(0..n);
        if !mu.coordinate_weights(i, &x, &mut w) {
            return Ok(PairOutcome::Unsupported);
        }
        let q = SmallDistribution::from_weights(&w)?;
        let mut stream = CoordinateStream::new(oracle, i, &x);
        let v = amplify(schedule.sub_failure, || kl_test_auto(&q, &mut stream, level.eps, 1.0 / 3.0, rng))?;
        Ok(if v.is_far() { PairOutcome::Reject } else { PairOutcome::Pass })
    })?;
    Ok(TestRun { verdict, reason, counts: diff(oracle.counts(), before), levels_visited, pairs_tested })
}

/// Stage-one sample count `2 ceil(2 ln 3 / eps_tv)`.
pub fn tv_stage_one_samples(eps_tv: f64) -> u64 {
    2 * (2.0 * 3f64.ln() / eps_tv).ceil() as u64
}

/// Decide `pi = mu` versus `TV(pi, mu) >= eps_tv`: a support screen on
/// general samples, then the KL tester at `eps_tv^2 / 2`.
pub fn identity_test_tv<R: Rng>(
    mu: &ModelSpec,
    params: &AtParameters,
    oracle: &mut OracleHandle,
    rng: &mut R,
) -> Result<TestRun> {
    require(oracle, Query::Coordinate, "coordinate-tv", "coordinate")?;
    check_dims(mu, oracle, params)?;
    let eps_tv = params.eps;
    if eps_tv > 1.0 {
        return Err(range("TV distance parameter must be at most 1"));
    }
    let before = oracle.counts();
    let mut x = vec![0; mu.n()];
    for _ in 0..tv_stage_one_samples(eps_tv) {
        oracle.draw_general_into(&mut x)?;
        if !mu.is_feasible(&x) {
            return Ok(TestRun {
                verdict: Verdict::Far,
                reason: Some(RejectReason::Support),
                counts: diff(oracle.counts(), before),
                levels_visited: 0,
                pairs_tested: 0,
            });
        }
    }
    let kl_params = AtParameters { eps: eps_tv * eps_tv / 2.0, ..*params };
    let mut run = identity_test_coordinate(mu, &kl_params, oracle, rng)?;
    run.counts = diff(oracle.counts(), before);
    Ok(run)
}

/// `log2(n/eps)` floored at 1 so the budget never collapses.
fn log_term(n: usize, eps: f64) -> f64 {
    (n as f64 / eps).log2().max(1.0)
}

/// `budget_scale * c * C ln(1/eta) (n/eps) log2^3(n/eps)` with the frozen `c`.
pub fn coordinate_query_budget(params: &AtParameters) -> f64 {
    let l = log_term(params.n, params.eps);
    params.budget_scale
        * constants().coordinate.budget_c
        * params.c
        * (1.0 / params.eta).ln()
        * (params.n as f64 / params.eps)
        * l.powi(3)
}

/// Largest query count a run can use on a binary alphabet: every pair drawn
/// and every repetition run at its planned size.
pub fn worst_case_queries(params: &AtParameters, k: usize) -> f64 {
    let schedule = Schedule::new(params);
    let r = repetitions(schedule.sub_failure) as f64;
    schedule
        .levels
        .iter()
        .map(|l| l.repeats as f64 * (1.0 + r * worst_case_samples(k, params.eta, l.eps, 1.0 / 3.0)))
        .sum()
}

/// `worst_case_queries / (C ln(1/eta) (n/eps) log2^3(n/eps))` at unit scale.
pub fn budget_ratio(params: &AtParameters, k: usize) -> f64 {
    let unit = AtParameters { budget_scale: 1.0, ..*params };
    let l = log_term(params.n, params.eps);
    worst_case_queries(&unit, k) / (params.c * (1.0 / params.eta).ln() * (params.n as f64 / params.eps) * l.powi(3))
}

#[cfg(test)]
mod tests;
