use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    bernoulli_kl_sample_size, bernoulli_kl_test, bernoulli_mean_sample_size, bernoulli_mean_test, check_failure,
    confidence_factor, flatten_eta, flatten_k, l2_identity_test, l2_sample_size_with, MapStream, SampleStream,
    SmallDistribution, Verdict,
};
use crate::constants::constants;
use crate::error::{range, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlStrategy {
    /// Single-symbol target: only support violations can be detected.
    SupportOnly,
    /// Two-symbol target handled by the Bernoulli tester.
    Bernoulli,
    /// Flatten to masses in `[eta/2, eta]`, then one l2 test.
    Flatten,
    /// Flatten by `k`, split off the light symbols, mean test plus l2 test.
    Partition,
}

fn effective_eta(q: &SmallDistribution) -> f64 {
    q.eta_min().min(1.0 / q.support_size() as f64)
}

/// Picks the cheaper of `1/(eps sqrt(eta))` and `sqrt(k) ln(1/eta) / eps^2`.
pub fn select_strategy(k: usize, eta: f64, eps: f64) -> KlStrategy {
    let flatten = 1.0 / (eps * eta.sqrt());
    let partition = (k as f64).sqrt() * (1.0 / eta).ln() / (eps * eps);
    if flatten <= partition {
        KlStrategy::Flatten
    } else {
        KlStrategy::Partition
    }
}

/// The reference scale `min(1/(eps sqrt(eta)), sqrt(k) ln(1/eta) / eps^2)`.
pub fn kl_reference_scale(k: usize, eta: f64, eps: f64) -> f64 {
    (1.0 / (eps * eta.sqrt())).min((k as f64).sqrt() * (1.0 / eta).ln() / (eps * eps))
}

/// Budget the consumed sample count is checked against.
pub fn kl_sample_bound(k: usize, eta: f64, eps: f64, failure: f64) -> f64 {
    constants().kl.budget_c * confidence_factor(failure) * kl_reference_scale(k, eta, eps)
}

/// Distinguishes `p = q` from `KL(p || q) >= eps` for a general alphabet.
/// A `p`-sample outside the support of `q` is an immediate `Far`.
pub fn kl_identity_test<S, R>(q: &SmallDistribution, p: &mut S, eps: f64, failure: f64, rng: &mut R) -> Result<Verdict>
where
    S: SampleStream + ?Sized,
    R: Rng + ?Sized,
{
    match kl_identity_inner(q, p, eps, failure, rng) {
        Err(Error::UnsupportedSymbol { .. }) => Ok(Verdict::Far),
        other => other,
    }
}

fn kl_identity_inner<S, R>(q: &SmallDistribution, p: &mut S, eps: f64, failure: f64, rng: &mut R) -> Result<Verdict>
where
    S: SampleStream + ?Sized,
    R: Rng + ?Sized,
{
    if !(eps > 0.0) {
        return Err(range("eps must be positive"));
    }
    check_failure(failure)?;
    let ks = q.support_size();
    let eta = effective_eta(q);
    if ks == 1 {
        return support_only(q, p, eps, failure);
    }
    let eps = eps.min((1.0 / eta).ln());
    let mut copy_rng = ChaCha8Rng::seed_from_u64(rng.random());
    match select_strategy(ks, eta, eps) {
        KlStrategy::Flatten => {
            let flat = flatten_eta(q, eta)?;
            let mut stream = MapStream::new(p, |s| flat.map(s, &mut copy_rng).ok());
            l2_identity_test(&flat.flat, &mut stream, (eps * eta / 2.0).sqrt(), failure, rng)
        }
        _ => {
            let flat = flatten_k(q)?;
            let kf = flat.k_flat() as f64;
            let log_b = (2.0 / eta).ln();
            let zeta = eps / (10.0 * kf * log_b);
            let light: Vec<bool> = q
                .masses()
                .iter()
                .zip(&flat.copies)
                .map(|(&m, &c)| c > 0 && m / (c as f64) < zeta)
                .collect();
            let q_light: f64 = q.masses().iter().zip(&light).filter(|(_, &l)| l).map(|(m, _)| m).sum();
            if q_light > 0.0 {
                let gamma = eps / (5.0 * q_light * log_b) - 1.0;
                let mut ind = MapStream::new(&mut *p, |s| match flat.copies.get(s) {
                    Some(&c) if c > 0 => Some(light[s] as usize),
                    _ => None,
                });
                if bernoulli_mean_test(q_light, &mut ind, gamma, failure / 2.0)?.is_far() {
                    return Ok(Verdict::Far);
                }
            }
            let mut stream = MapStream::new(p, |s| flat.map(s, &mut copy_rng).ok());
            l2_identity_test(&flat.flat, &mut stream, (0.8 * eps * zeta).sqrt(), failure / 2.0, rng)
        }
    }
}

fn support_only<S: SampleStream + ?Sized>(q: &SmallDistribution, p: &mut S, eps: f64, failure: f64) -> Result<Verdict> {
    let m = ((1.0 / failure).ln() / eps).ceil().max(1.0) as u64;
    for _ in 0..m {
        let s = p.draw()?;
        if q.masses().get(s).is_none_or(|&v| v == 0.0) {
            return Ok(Verdict::Far);
        }
    }
    Ok(Verdict::Equal)
}

/// Strategy [`kl_test_auto`] would use for `q`.
pub fn auto_strategy(q: &SmallDistribution, eps: f64) -> KlStrategy {
    match q.support_size() {
        1 => KlStrategy::SupportOnly,
        2 => KlStrategy::Bernoulli,
        ks => select_strategy(ks, effective_eta(q), eps.min((1.0 / effective_eta(q)).ln())),
    }
}

/// Bernoulli tester for two-symbol supports, the general tester otherwise.
pub fn kl_test_auto<S, R>(q: &SmallDistribution, p: &mut S, eps: f64, failure: f64, rng: &mut R) -> Result<Verdict>
where
    S: SampleStream + ?Sized,
    R: Rng + ?Sized,
{
    if q.support_size() != 2 {
        return kl_identity_test(q, p, eps, failure, rng);
    }
    let support = q.support();
    let (lo, hi) = (support[0], support[1]);
    let mut bits = MapStream::new(p, |s| {
        if s == lo {
            Some(0)
        } else if s == hi {
            Some(1)
        } else {
            None
        }
    });
    match bernoulli_kl_test(q.masses()[hi], &mut bits, eps, failure) {
        Err(Error::UnsupportedSymbol { .. }) => Ok(Verdict::Far),
        other => other,
    }
}

/// Nominal (pre-Poisson) number of samples [`kl_test_auto`] plans to draw;
/// an upper bound over both sub-tests.
pub fn planned_samples(q: &SmallDistribution, eps: f64, failure: f64) -> f64 {
    planned_samples_with(constants().l2.c0, q, eps, failure)
}

pub(crate) fn planned_samples_with(c0: f64, q: &SmallDistribution, eps: f64, failure: f64) -> f64 {
    let ks = q.support_size();
    let eta = effective_eta(q);
    match auto_strategy(q, eps) {
        KlStrategy::SupportOnly => ((1.0 / failure).ln() / eps).ceil().max(1.0),
        KlStrategy::Bernoulli => {
            let support = q.support();
            bernoulli_kl_sample_size(q.masses()[support[1]], eps, failure) as f64
        }
        KlStrategy::Flatten => {
            let eps = eps.min((1.0 / eta).ln());
            l2_sample_size_with(c0, eta.sqrt(), (eps * eta / 2.0).sqrt(), failure)
        }
        KlStrategy::Partition => {
            let eps = eps.min((1.0 / eta).ln());
            let kf = 2.0 * ks as f64;
            let log_b = (2.0 / eta).ln();
            let zeta = eps / (10.0 * kf * log_b);
            let q_light = (zeta * kf).min(1.0);
            let gamma = eps / (5.0 * q_light * log_b) - 1.0;
            bernoulli_mean_sample_size(q_light, gamma.max(1.0), failure / 2.0) as f64
                + l2_sample_size_with(c0, (2.0 / kf).sqrt(), (0.8 * eps * zeta).sqrt(), failure / 2.0)
        }
    }
}
