use rand::{Rng, RngCore};

use super::{
    bernoulli_kl_sample_size, kl_test_auto, l2_sample_size, confidence_factor, SampleStream, SmallDistribution,
    Verdict,
};
use crate::error::{range, Result};

/// Source of multiplicative approximations `q_hat` of a target `q`:
/// `e^{-acc} <= q_hat(a)/q(a) <= e^{acc}` with probability `1 - failure`, and
/// `q_hat(a) = 0` exactly when `q(a) = 0`.
pub trait ApproxTarget {
    fn approximate(&mut self, accuracy: f64, failure: f64, rng: &mut dyn RngCore) -> Result<SmallDistribution>;
}

/// Returns the target itself.
pub struct ExactTarget(pub SmallDistribution);

impl ApproxTarget for ExactTarget {
    fn approximate(&mut self, _: f64, _: f64, _: &mut dyn RngCore) -> Result<SmallDistribution> {
        Ok(self.0.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    /// Independent factors `e^{u acc/2}` with `u` uniform in `[-1, 1]`.
    Random,
    /// Factors alternating between `e^{acc/2}` and `e^{-acc/2}`.
    Alternating,
}

/// An honest approximation scheme: perturbs each mass by a factor in
/// `e^{[-acc/2, acc/2]}` and renormalises, so ratios stay within `e^{+-acc}`.
pub struct PerturbedTarget {
    q: SmallDistribution,
    mode: Perturbation,
}

impl PerturbedTarget {
    pub fn new(q: SmallDistribution, mode: Perturbation) -> Self {
        Self { q, mode }
    }
}

pub(crate) fn perturb(q: &SmallDistribution, mode: Perturbation, accuracy: f64, rng: &mut dyn RngCore) -> Result<SmallDistribution> {
    let weights: Vec<f64> = q
        .masses()
        .iter()
        .enumerate()
        .map(|(a, &m)| {
            let u = match mode {
                Perturbation::Random => rng.random_range(-1.0..=1.0),
                Perturbation::Alternating => {
                    if a % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            m * (u * accuracy / 2.0).exp()
        })
        .collect();
    SmallDistribution::from_weights(&weights)
}

impl ApproxTarget for PerturbedTarget {
    fn approximate(&mut self, accuracy: f64, _: f64, rng: &mut dyn RngCore) -> Result<SmallDistribution> {
        perturb(&self.q, self.mode, accuracy, rng)
    }
}

/// Worst-case planned sample count of [`kl_test_auto`] over targets on `k`
/// symbols whose nonzero masses are at least `eta`.
pub fn worst_case_samples(k: usize, eta: f64, eps: f64, failure: f64) -> f64 {
    let eta = eta.min(1.0 / k as f64);
    let eps = eps.min((1.0 / eta).ln());
    if k == 2 {
        let interval = bernoulli_kl_sample_size(0.5, eps.min(1.0), failure) as f64;
        let mean = 40.0 * confidence_factor(failure) * (1.0 / eta).ln() / eps;
        return interval.max(mean);
    }
    let flatten = l2_sample_size(eta.sqrt(), (eps * eta / 2.0).sqrt(), failure);
    let kf = 2.0 * k as f64;
    let log_b = (2.0 / eta).ln();
    let zeta = eps / (10.0 * kf * log_b);
    let partition = 20.0 * 10.0 * confidence_factor(failure / 2.0) * log_b / eps
        + l2_sample_size((2.0 / kf).sqrt(), (0.8 * eps * zeta).sqrt(), failure / 2.0);
    flatten.max(partition)
}

/// `xi = min(eps, 1/m) / 8` with `m` the base tester's budget at `eps/2` and
/// failure 1/10.
pub fn robust_xi(k: usize, b: f64, eps: f64) -> f64 {
    let m = worst_case_samples(k, b / 2.0, eps / 2.0, 0.1);
    eps.min(1.0 / m) / 8.0
}

/// KL identity test against an approximately known target whose masses are
/// at least `b`: asks for `q_hat` at accuracy `xi` and confidence 9/10, then
/// tests at `eps/2` with failure 1/10.
pub fn robust_kl_test<T, S, R>(target: &mut T, k: usize, p: &mut S, eps: f64, b: f64, rng: &mut R) -> Result<Verdict>
where
    T: ApproxTarget + ?Sized,
    S: SampleStream + ?Sized,
    R: RngCore,
{
    if !(eps > 0.0 && b > 0.0) {
        return Err(range("eps and b must be positive"));
    }
    let xi = robust_xi(k, b, eps);
    let q_hat = target.approximate(xi, 0.1, rng)?;
    kl_test_auto(&q_hat, p, eps / 2.0, 0.1, rng)
}
