use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::{check_failure, SampleStream, SmallDistribution, Verdict};
use crate::constants::constants;
use crate::error::{range, Error, Result};

/// Chebyshev scaling: the statistic's variance bound gives error `1/3` at the
/// base size, so `delta` needs `sqrt(1/(3 delta))` times more.
fn chebyshev_factor(failure: f64) -> f64 {
    (1.0 / (3.0 * failure)).sqrt().max(1.0)
}

/// Poisson mean `m = ceil(c0 * max(||q||_2 / eps2^2, 1 / eps2))`, scaled for
/// failure probabilities below 1/3.
pub fn l2_sample_size(q_norm: f64, eps2: f64, failure: f64) -> f64 {
    l2_sample_size_with(constants().l2.c0, q_norm, eps2, failure)
}

pub(crate) fn l2_sample_size_with(c0: f64, q_norm: f64, eps2: f64, failure: f64) -> f64 {
    let base = (q_norm / (eps2 * eps2)).max(1.0 / eps2);
    (c0 * chebyshev_factor(failure) * base).ceil()
}

/// Distinguishes `||p - q||_2 <= eps2/2` (`Equal`) from `||p - q||_2 >= eps2`
/// (`Far`). Draws `Poi(m)` samples and rejects when
/// `sum_a (N_a - m q_a)^2 - N_a >= (5/8) m^2 eps2^2`.
pub fn l2_identity_test<S, R>(
    q: &SmallDistribution,
    p: &mut S,
    eps2: f64,
    failure: f64,
    rng: &mut R,
) -> Result<Verdict>
where
    S: SampleStream + ?Sized,
    R: Rng + ?Sized,
{
    if !(eps2 > 0.0) {
        return Err(range("eps2 must be positive"));
    }
    check_failure(failure)?;
    l2_test_with_mean(q, p, eps2, l2_sample_size(q.l2_norm(), eps2, failure), rng)
}

/// The l2 statistic at an explicit Poisson mean `m`.
pub(crate) fn l2_test_with_mean<S, R>(q: &SmallDistribution, p: &mut S, eps2: f64, m: f64, rng: &mut R) -> Result<Verdict>
where
    S: SampleStream + ?Sized,
    R: Rng + ?Sized,
{
    let draws = Poisson::new(m).map_err(|e| range(e.to_string()))?.sample(rng) as u64;
    let k = q.k();
    let mut counts = vec![0u64; k];
    for _ in 0..draws {
        let s = p.draw()?;
        if s >= k {
            return Err(Error::UnsupportedSymbol { symbol: s });
        }
        counts[s] += 1;
    }
    let z: f64 = counts
        .iter()
        .zip(q.masses())
        .map(|(&c, &qa)| {
            let c = c as f64;
            (c - m * qa).powi(2) - c
        })
        .sum();
    Ok(if z >= 0.625 * m * m * eps2 * eps2 { Verdict::Far } else { Verdict::Equal })
}
