//! Subcube-oracle algorithms: the chain-rule identity tester (exact or
//! approximate prefix marginals) and the additive KL estimator.

use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::at_tester::{run_schedule, AtParameters, PairOutcome, Schedule, TestRun};
use crate::constants::constants;
use crate::error::{range, Error, Result};
use crate::models::{ModelSpec, Pinning};
use crate::oracles::{OracleHandle, Query, QueryCounts};
use crate::testers::{
    amplify, kl_test_auto, perturb, repetitions_for, robust_kl_test, ApproxTarget, Perturbation, SampleStream,
    SmallDistribution,
};

/// Conditional marginals of a visible distribution along a fixed coordinate
/// order: position `pos` is coordinate `order()[pos]`, conditioned on the
/// values of `order()[..pos]`.
pub trait PrefixMarginalProvider {
    fn n(&self) -> usize;
    fn k(&self) -> usize;
    fn order(&self) -> &[usize];
    fn marginal(&self, pos: usize, prefix: &[usize]) -> Result<SmallDistribution>;
}

/// Exact prefix marginals computed from a [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct ExactPrefixProvider {
    model: Arc<ModelSpec>,
    order: Vec<usize>,
}

impl ExactPrefixProvider {
    pub fn new(model: Arc<ModelSpec>) -> Self {
        let order = (0..model.n()).collect();
        Self { model, order }
    }

    /// Use `order` instead of the natural order (a topological order for
    /// Bayesian networks).
    pub fn with_order(model: Arc<ModelSpec>, order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; model.n()];
        for &i in &order {
            if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                return Err(range("order must be a permutation of the coordinates"));
            }
        }
        if order.len() != model.n() {
            return Err(range("order must list every coordinate"));
        }
        Ok(Self { model, order })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }
}

impl PrefixMarginalProvider for ExactPrefixProvider {
    fn n(&self) -> usize {
        self.model.n()
    }
    fn k(&self) -> usize {
        self.model.k()
    }
    fn order(&self) -> &[usize] {
        &self.order
    }
    fn marginal(&self, pos: usize, prefix: &[usize]) -> Result<SmallDistribution> {
        let pin = prefix_pinning(self.model.n(), &self.order, prefix);
        SmallDistribution::from_weights(&self.model.conditional_marginal(self.order[pos], &pin)?)
    }
}

fn prefix_pinning(n: usize, order: &[usize], prefix: &[usize]) -> Pinning {
    let mut pin = Pinning::free(n);
    for (&i, &v) in order.iter().zip(prefix) {
        pin.set(i, Some(v));
    }
    pin
}

/// A provider's exact marginal seen through a simulated approximation scheme.
struct PerturbedMarginal<'a> {
    q: &'a SmallDistribution,
    mode: Perturbation,
}

impl ApproxTarget for PerturbedMarginal<'_> {
    fn approximate(&mut self, accuracy: f64, _: f64, rng: &mut dyn RngCore) -> Result<SmallDistribution> {
        perturb(self.q, self.mode, accuracy, rng)
    }
}

/// Subcube draws of one coordinate under a fixed pinning.
pub struct SubcubeStream<'a> {
    oracle: &'a mut OracleHandle,
    pin: &'a Pinning,
    coord: usize,
    buf: Vec<usize>,
    consumed: u64,
}

impl<'a> SubcubeStream<'a> {
    pub fn new(oracle: &'a mut OracleHandle, pin: &'a Pinning, coord: usize) -> Self {
        let n = pin.n();
        Self { oracle, pin, coord, buf: vec![0; n], consumed: 0 }
    }
}

impl SampleStream for SubcubeStream<'_> {
    fn draw(&mut self) -> Result<usize> {
        self.consumed += 1;
        self.oracle.draw_subcube_into(self.pin, &mut self.buf)?;
        Ok(self.buf[self.coord])
    }
    fn consumed(&self) -> u64 {
        self.consumed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubcubeParameters {
    /// Prefix marginal bound of the visible distribution.
    pub b: f64,
    pub eps: f64,
    pub budget_scale: f64,
    /// Test against simulated approximate marginals instead of exact ones.
    pub approximate: Option<Perturbation>,
}

impl SubcubeParameters {
    pub fn new(b: f64, eps: f64) -> Result<Self> {
        if !(b > 0.0 && b <= 0.5) {
            return Err(range(format!("b = {b} outside (0, 1/2]")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(range("eps must be positive"));
        }
        Ok(Self { b, eps, budget_scale: 1.0, approximate: None })
    }

    pub fn with_budget_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(range("budget scale must be positive"));
        }
        self.budget_scale = scale;
        Ok(self)
    }

    pub fn with_approximation(mut self, mode: Perturbation) -> Self {
        self.approximate = Some(mode);
        self
    }

    /// The coordinate tester's parameters with `C = 1` and `eta = b`.
    pub fn schedule_parameters(&self, n: usize) -> Result<AtParameters> {
        AtParameters::new(1.0, self.b, self.eps, n)?.with_budget_scale(self.budget_scale)
    }
}

fn require_subcube(oracle: &OracleHandle, tester: &str) -> Result<()> {
    if oracle.mode().permits(Query::Subcube) {
        Ok(())
    } else {
        Err(Error::IncompatibleMode { tester: tester.into(), needs: "subcube".into(), mode: oracle.mode().to_string() })
    }
}

fn check_dims<P: PrefixMarginalProvider + ?Sized>(provider: &P, oracle: &OracleHandle) -> Result<()> {
    let hidden = oracle.model();
    if hidden.n() != provider.n() || hidden.k() != provider.k() {
        return Err(Error::DimensionMismatch { expected: provider.n(), got: hidden.n() });
    }
    Ok(())
}

fn diff(after: QueryCounts, before: QueryCounts) -> QueryCounts {
    QueryCounts {
        general: after.general - before.general,
        coordinate: after.coordinate - before.coordinate,
        subcube: after.subcube - before.subcube,
        pairwise: after.pairwise - before.pairwise,
    }
}

/// Decide `pi = mu` versus `KL(pi || mu) >= eps` with subcube queries, using
/// the chain rule along the provider's order in place of tensorization.
pub fn identity_test_subcube<P, R>(
    provider: &P,
    params: &SubcubeParameters,
    oracle: &mut OracleHandle,
    rng: &mut R,
) -> Result<TestRun>
where
    P: PrefixMarginalProvider + ?Sized,
    R: RngCore,
{
    let tester = if params.approximate.is_some() { "subcube-approx" } else { "subcube-kl" };
    require_subcube(oracle, tester)?;
    check_dims(provider, oracle)?;
    let n = provider.n();
    let k = provider.k();
    let schedule = Schedule::new(&params.schedule_parameters(n)?);
    let before = oracle.counts();
    let free = Pinning::free(n);
    let mut x = vec![0; n];
    let (verdict, reason, levels_visited, pairs_tested) = run_schedule(&schedule, |level| {
        let pos = rng.random_range(0..n);
        oracle.draw_subcube_into(&free, &mut x)?;
        let prefix: Vec<usize> = provider.order()[..pos].iter().map(|&i| x[i]).collect();
        let q = match provider.marginal(pos, &prefix) {
            Ok(q) => q,
            Err(Error::ZeroProbabilityPinning | Error::InfeasiblePinning) => return Ok(PairOutcome::Unsupported),
            Err(e) => return Err(e),
        };
        let pin = prefix_pinning(n, provider.order(), &prefix);
        let mut stream = SubcubeStream::new(oracle, &pin, provider.order()[pos]);
        let v = match params.approximate {
            None => amplify(schedule.sub_failure, || kl_test_auto(&q, &mut stream, level.eps, 1.0 / 3.0, rng))?,
            Some(mode) => {
                let mut target = PerturbedMarginal { q: &q, mode };
                amplify(schedule.sub_failure, || robust_kl_test(&mut target, k, &mut stream, level.eps, params.b, rng))?
            }
        };
        Ok(if v.is_far() { PairOutcome::Reject } else { PairOutcome::Pass })
    })?;
    Ok(TestRun { verdict, reason, counts: diff(oracle.counts(), before), levels_visited, pairs_tested })
}

/// Pluggable entropy estimator with a sample-size rule.
pub trait EntropyEstimator {
    /// Samples needed for `|H_hat - H| <= eps` with probability `1 - delta`.
    fn sample_size(&self, k: usize, eps: f64, delta: f64) -> u64;
    /// Estimate from symbol counts over `m` samples, clamped to `[0, ln k]`.
    fn estimate(&self, counts: &[u64], m: u64) -> f64;
}

/// Plug-in entropy plus the Miller-Madow correction `(K_hat - 1) / (2m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MillerMadow {
    pub bias: f64,
    pub spread: f64,
}

impl Default for MillerMadow {
    fn default() -> Self {
        let c = &constants().entropy;
        Self { bias: c.bias, spread: c.spread }
    }
}

impl EntropyEstimator for MillerMadow {
    fn sample_size(&self, k: usize, eps: f64, delta: f64) -> u64 {
        let v = ((k + 1) as f64).ln().powi(2);
        (self.bias * (k - 1) as f64 / eps + self.spread * v * (2.0 / delta).ln() / (eps * eps)).ceil() as u64
    }

    fn estimate(&self, counts: &[u64], m: u64) -> f64 {
        if m == 0 {
            return 0.0;
        }
        let mf = m as f64;
        let mut h = 0.0;
        let mut seen = 0;
        for &c in counts.iter().filter(|&&c| c > 0) {
            let p = c as f64 / mf;
            h -= p * p.ln();
            seen += 1;
        }
        (h + (seen - 1) as f64 / (2.0 * mf)).clamp(0.0, (counts.len() as f64).ln())
    }
}

fn scaled(m: f64, scale: f64) -> u64 {
    (m * scale).ceil().max(1.0) as u64
}

/// `H_hat` from `sample_size(k, eps, delta)` draws (times `scale`).
pub fn estimate_entropy<S, E>(p: &mut S, k: usize, eps: f64, delta: f64, estimator: &E, scale: f64) -> Result<f64>
where
    S: SampleStream + ?Sized,
    E: EntropyEstimator + ?Sized,
{
    if k < 2 {
        return Err(range("entropy estimation needs k >= 2"));
    }
    let m = scaled(estimator.sample_size(k, eps, delta) as f64, scale);
    let mut counts = vec![0u64; k];
    for _ in 0..m {
        let s = p.draw()?;
        *counts.get_mut(s).ok_or(Error::InvalidSymbol { symbol: s, k })? += 1;
    }
    Ok(estimator.estimate(&counts, m))
}

/// `G_hat = mean ln(1/q_hat(a_j))` over `ceil(8 ln^2(1/b) / eps^2)` draws
/// (times `scale`), with `q_hat` requested at accuracy `eps/2`.
pub fn estimate_g<T, S>(target: &mut T, p: &mut S, eps: f64, b: f64, scale: f64, rng: &mut dyn RngCore) -> Result<f64>
where
    T: ApproxTarget + ?Sized,
    S: SampleStream + ?Sized,
{
    let q_hat = target.approximate(eps / 2.0, 0.1, rng)?;
    let m = scaled(g_sample_size(b, eps) as f64, scale);
    let mut acc = 0.0;
    for _ in 0..m {
        let s = p.draw()?;
        match q_hat.masses().get(s) {
            Some(&q) if q > 0.0 => acc -= q.ln(),
            _ => return Err(Error::UnsupportedSymbol { symbol: s }),
        }
    }
    Ok(acc / m as f64)
}

/// `ceil(8 ln^2(1/b) / eps^2)`.
pub fn g_sample_size(b: f64, eps: f64) -> u64 {
    (8.0 * (1.0 / b).ln().powi(2) / (eps * eps)).ceil() as u64
}

/// `R_hat = G_hat(eps/2) - H_hat(eps/2)`, estimating `KL(p || q)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_kl_small<T, S, E>(
    target: &mut T,
    k: usize,
    p: &mut S,
    eps: f64,
    b: f64,
    estimator: &E,
    scale: f64,
    rng: &mut dyn RngCore,
) -> Result<f64>
where
    T: ApproxTarget + ?Sized,
    S: SampleStream + ?Sized,
    E: EntropyEstimator + ?Sized,
{
    let g = estimate_g(target, p, eps / 2.0, b, scale, rng)?;
    let h = estimate_entropy(p, k, eps / 2.0, 0.1, estimator, scale)?;
    Ok(g - h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    /// `S_hat`, absent when a sample fell outside the visible support.
    pub estimate: Option<f64>,
    pub support_violation: bool,
    pub rounds: u64,
    pub repetitions: u64,
    pub round_stats: Option<RoundStats>,
    pub counts: QueryCounts,
}

/// Rounds `ceil(8 n^2 ln^2(1/b) / eps^2)`.
pub fn estimation_rounds(n: usize, b: f64, eps: f64) -> u64 {
    (8.0 * (n * n) as f64 * (1.0 / b).ln().powi(2) / (eps * eps)).ceil() as u64
}

/// Median repetitions per round: the base estimate fails with probability at
/// most 3/10, and the round must fail with probability at most `1/(10L)`.
pub fn round_repetitions(rounds: u64, scale: f64) -> u64 {
    scaled(repetitions_for(1.0 / (10.0 * rounds as f64), 0.3) as f64, scale)
}

/// Queries [`estimate_kl_global`] makes when no round stops early: one
/// general draw per round plus `reps (m_G + m_H)` subcube draws.
pub fn planned_estimation_queries<E: EntropyEstimator + ?Sized>(n: usize, k: usize, params: &SubcubeParameters, estimator: &E) -> u64 {
    let rounds = estimation_rounds(n, params.b, params.eps);
    let reps = round_repetitions(rounds, params.budget_scale);
    let acc = params.eps / (2.0 * n as f64);
    let m_g = scaled(g_sample_size(params.b, acc / 2.0) as f64, params.budget_scale);
    let m_h = scaled(estimator.sample_size(k, acc / 2.0, 0.1) as f64, params.budget_scale);
    rounds * (1 + reps * (m_g + m_h))
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

/// `S_hat = (n/L) sum_l R_hat_l`, an additive estimate of `KL(pi || mu)`.
/// `budget_scale` shrinks the per-round sample sizes and repetition count.
pub fn estimate_kl_global<P, E>(
    provider: &P,
    params: &SubcubeParameters,
    oracle: &mut OracleHandle,
    estimator: &E,
    rng: &mut dyn RngCore,
) -> Result<KlEstimate>
where
    P: PrefixMarginalProvider + ?Sized,
    E: EntropyEstimator + ?Sized,
{
    require_subcube(oracle, "kl-estimate")?;
    check_dims(provider, oracle)?;
    let (n, k) = (provider.n(), provider.k());
    let before = oracle.counts();
    let rounds = estimation_rounds(n, params.b, params.eps);
    let reps = round_repetitions(rounds, params.budget_scale);
    let accuracy = params.eps / (2.0 * n as f64);
    let mut x = vec![0; n];
    let mut values = Vec::with_capacity(rounds as usize);
    let mut trial = vec![0.0; reps as usize];
    let violation = |oracle: &OracleHandle, reps| KlEstimate {
        estimate: None,
        support_violation: true,
        rounds,
        repetitions: reps,
        round_stats: None,
        counts: diff(oracle.counts(), before),
    };
    for _ in 0..rounds {
        let pos = rng.random_range(0..n);
        oracle.draw_general_into(&mut x)?;
        let prefix: Vec<usize> = provider.order()[..pos].iter().map(|&i| x[i]).collect();
        let q = match provider.marginal(pos, &prefix) {
            Ok(q) => q,
            Err(Error::ZeroProbabilityPinning | Error::InfeasiblePinning) => return Ok(violation(oracle, reps)),
            Err(e) => return Err(e),
        };
        let pin = prefix_pinning(n, provider.order(), &prefix);
        let coord = provider.order()[pos];
        for slot in trial.iter_mut() {
            let mut stream = SubcubeStream::new(oracle, &pin, coord);
            let r = match params.approximate {
                None => {
                    let mut target = crate::testers::ExactTarget(q.clone());
                    estimate_kl_small(&mut target, k, &mut stream, accuracy, params.b, estimator, params.budget_scale, rng)
                }
                Some(mode) => {
                    let mut target = PerturbedMarginal { q: &q, mode };
                    estimate_kl_small(&mut target, k, &mut stream, accuracy, params.b, estimator, params.budget_scale, rng)
                }
            };
            *slot = match r {
                Ok(v) => v,
                Err(Error::UnsupportedSymbol { .. }) => return Ok(violation(oracle, reps)),
                Err(e) => return Err(e),
            };
        }
        values.push(median(&mut trial));
    }
    let total: f64 = values.iter().sum();
    let mean = total / rounds as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (rounds.max(2) - 1) as f64;
    let stats = RoundStats {
        mean,
        sd: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(KlEstimate {
        estimate: Some(n as f64 * mean),
        support_violation: false,
        rounds,
        repetitions: reps,
        round_stats: Some(stats),
        counts: diff(oracle.counts(), before),
    })
}

/// Tolerant test: `Far` iff `S_hat` exceeds `s + eps/2` (or the support is
/// violated). Separates `KL <= s` from `KL >= s + eps`.
pub fn tolerant_verdict(estimate: &KlEstimate, s: f64, eps: f64) -> crate::testers::Verdict {
    match estimate.estimate {
        Some(v) if v <= s + eps / 2.0 => crate::testers::Verdict::Equal,
        _ => crate::testers::Verdict::Far,
    }
}

#[cfg(test)]
mod tests;
