//! Finite-domain identity testers over `{0, .., k-1}`.

mod amplify;
mod bernoulli;
mod flatten;
mod kl;
mod l2;
mod robust;
mod stream;

pub use amplify::{amplify, repetitions, repetitions_for};
pub use bernoulli::{
    bernoulli_case, bernoulli_kl_sample_size, bernoulli_kl_test, bernoulli_mean_sample_size,
    bernoulli_mean_test, BernoulliCase,
};
pub use flatten::{flatten_eta, flatten_k, Flattening};
pub use kl::{
    auto_strategy, kl_identity_test, kl_reference_scale, kl_sample_bound, kl_test_auto, planned_samples,
    select_strategy, KlStrategy,
};
pub use l2::{l2_identity_test, l2_sample_size};
pub(crate) use l2::{l2_sample_size_with, l2_test_with_mean};
pub(crate) use kl::planned_samples_with;
pub use robust::{
    robust_kl_test, robust_xi, worst_case_samples, ApproxTarget, ExactTarget, Perturbation, PerturbedTarget,
};
pub(crate) use robust::perturb;
pub use stream::{FnStream, IidStream, MapStream, SampleStream};

use serde::{Deserialize, Serialize};

use crate::error::{range, Result};
use crate::models::{validate_masses, MASS_TOLERANCE};

/// Outcome of a test. `Equal` is the null verdict ("close" for the l2 test),
/// `Far` the rejection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Equal,
    Far,
}

impl Verdict {
    pub fn is_far(self) -> bool {
        self == Verdict::Far
    }
}

/// A probability vector with a lower bound on its nonzero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallDistribution {
    masses: Vec<f64>,
    eta_min: f64,
}

impl SmallDistribution {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        validate_masses("masses", &masses)?;
        let eta_min = masses.iter().copied().filter(|&m| m > 0.0).fold(1.0, f64::min);
        Ok(Self { masses, eta_min })
    }

    /// Normalise nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(range("weights must be nonnegative with positive total"));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Self {
        Self { masses: vec![1.0 / k as f64; k], eta_min: 1.0 / k as f64 }
    }

    /// Declare a weaker lower bound than the computed minimum.
    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || eta > self.eta_min + MASS_TOLERANCE {
            return Err(range(format!("eta {eta} exceeds the smallest nonzero mass {}", self.eta_min)));
        }
        self.eta_min = eta;
        Ok(self)
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn k(&self) -> usize {
        self.masses.len()
    }

    pub fn eta_min(&self) -> f64 {
        self.eta_min
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.k()).filter(|&a| self.masses[a] > 0.0).collect()
    }

    pub fn support_size(&self) -> usize {
        self.masses.iter().filter(|&&m| m > 0.0).count()
    }

    pub fn l2_norm(&self) -> f64 {
        self.masses.iter().map(|m| m * m).sum::<f64>().sqrt()
    }

    /// `KL(self || q)`, `+inf` on a support violation.
    pub fn kl(&self, q: &SmallDistribution) -> f64 {
        let mut acc = crate::numerics::CompensatedSum::new();
        for (&a, &b) in self.masses.iter().zip(&q.masses) {
            if a > 0.0 {
                if b == 0.0 {
                    return f64::INFINITY;
                }
                acc.add(a * (a / b).ln());
            }
        }
        acc.value()
    }

    pub fn entropy(&self) -> f64 {
        self.masses.iter().filter(|&&m| m > 0.0).map(|&m| -m * m.ln()).sum()
    }
}

/// Factor by which sample sizes grow when the failure probability drops
/// below 1/3.
pub(crate) fn confidence_factor(failure: f64) -> f64 {
    let f = failure.min(1.0 / 3.0);
    (1.0f64).max((1.0 / (3.0 * f)).sqrt()).max(0.8 * (1.0 / f).ln())
}

pub(crate) fn check_failure(failure: f64) -> Result<()> {
    if failure > 0.0 && failure < 1.0 {
        Ok(())
    } else {
        Err(range(format!("failure probability {failure} outside (0, 1)")))
    }
}
