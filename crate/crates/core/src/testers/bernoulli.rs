use super::{check_failure, SampleStream, Verdict};
use crate::error::{range, Error, Result};

/// Chernoff scaling relative to failure 1/3.
fn chernoff_scale(failure: f64) -> f64 {
    (0.8 * (1.0 / failure).ln()).max(1.0)
}

/// `m = ceil(10 (1 + gamma) / (gamma^2 q))` at failure 1/3.
pub fn bernoulli_mean_sample_size(q: f64, gamma: f64, failure: f64) -> u64 {
    (10.0 * chernoff_scale(failure) * (1.0 + gamma) / (gamma * gamma * q)).ceil() as u64
}

fn mean_of<S: SampleStream + ?Sized>(p: &mut S, m: u64) -> Result<f64> {
    let mut ones = 0u64;
    for _ in 0..m {
        match p.draw()? {
            0 => {}
            1 => ones += 1,
            s => return Err(Error::UnsupportedSymbol { symbol: s }),
        }
    }
    Ok(ones as f64 / m as f64)
}

/// Distinguishes `p = q` from `p >= (1 + gamma) q`; `Far` means the mean is
/// inflated (`p_hat > (1 + gamma/2) q`).
pub fn bernoulli_mean_test<S: SampleStream + ?Sized>(q: f64, p: &mut S, gamma: f64, failure: f64) -> Result<Verdict> {
    if !(gamma > 0.0) {
        return Err(range("gamma must be positive"));
    }
    if !(q > 0.0 && q <= 1.0 / (1.0 + gamma) + 1e-12) {
        return Err(range(format!("q = {q} outside (0, 1/(1+gamma)]")));
    }
    check_failure(failure)?;
    let m = bernoulli_mean_sample_size(q, gamma, failure);
    let p_hat = mean_of(p, m)?;
    Ok(if p_hat > (1.0 + gamma / 2.0) * q { Verdict::Far } else { Verdict::Equal })
}

/// Which regime the Bernoulli KL tester uses for `q <= 1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BernoulliCase {
    /// `eps <= 2q`: two-sided interval around `q`.
    Interval,
    /// `2q < eps <= 2q ln(1/q)`: mean test with `gamma = 1`.
    MeanUnit,
    /// `eps > max(2q, 2q ln(1/q))`: mean test with
    /// `gamma = eps / (q ln(1/q)) - 1`.
    MeanScaled { gamma: f64 },
}

/// Case for `q in (0, 1/2]` (after any flip).
pub fn bernoulli_case(q: f64, eps: f64) -> BernoulliCase {
    let l = (1.0 / q).ln();
    if eps <= 2.0 * q {
        BernoulliCase::Interval
    } else if eps <= 2.0 * q * l {
        BernoulliCase::MeanUnit
    } else {
        BernoulliCase::MeanScaled { gamma: eps / (q * l) - 1.0 }
    }
}

fn interval_size(eps: f64, failure: f64) -> u64 {
    let c = 64f64.max(32.0 * (1.0 / failure).ln()).max(24.0 * (2.0 / failure).ln());
    (c / eps).ceil() as u64
}

/// Samples the tester will draw for `(q, eps)`.
pub fn bernoulli_kl_sample_size(q: f64, eps: f64, failure: f64) -> u64 {
    let q = q.min(1.0 - q);
    let eps = eps.min((1.0 / q).ln());
    match bernoulli_case(q, eps) {
        BernoulliCase::Interval => interval_size(eps, failure),
        BernoulliCase::MeanUnit => bernoulli_mean_sample_size(q, 1.0, failure),
        BernoulliCase::MeanScaled { gamma } => bernoulli_mean_sample_size(q, gamma, failure),
    }
}

/// Distinguishes `p = q` from `KL(Ber(p) || Ber(q)) >= eps` with
/// `O(ln(1/min(q, 1-q)) / eps)` samples. `p` yields symbols in `{0, 1}`.
pub fn bernoulli_kl_test<S: SampleStream + ?Sized>(q: f64, p: &mut S, eps: f64, failure: f64) -> Result<Verdict> {
    if !(q > 0.0 && q < 1.0) {
        return Err(range(format!("q = {q} outside (0, 1)")));
    }
    if !(eps > 0.0) {
        return Err(range("eps must be positive"));
    }
    check_failure(failure)?;
    if q > 0.5 {
        let mut flipped = super::MapStream::new(p, |s| (s < 2).then(|| 1 - s));
        return bernoulli_kl_low(1.0 - q, &mut flipped, eps, failure);
    }
    bernoulli_kl_low(q, p, eps, failure)
}

fn bernoulli_kl_low<S: SampleStream + ?Sized>(q: f64, p: &mut S, eps: f64, failure: f64) -> Result<Verdict> {
    // No Bernoulli is further than ln(1/q) from Ber(q).
    let eps = eps.min((1.0 / q).ln());
    match bernoulli_case(q, eps) {
        BernoulliCase::Interval => {
            let m = interval_size(eps, failure);
            let p_hat = mean_of(p, m)?;
            let half = (eps * q / 8.0).sqrt();
            Ok(if (p_hat - q).abs() <= half { Verdict::Equal } else { Verdict::Far })
        }
        BernoulliCase::MeanUnit => bernoulli_mean_test(q, p, 1.0, failure),
        BernoulliCase::MeanScaled { gamma } => bernoulli_mean_test(q, p, gamma, failure),
    }
}
