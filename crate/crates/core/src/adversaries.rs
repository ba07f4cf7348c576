//! Lower-bound families used as hidden distributions: the subcube family
//! `pi_{A,sigma}` and the matched-pair Ising family `pi_M`.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, range, Error, Result};
use crate::models::{spin, Pinning};
use crate::numerics::{ceil_log2, ln_choose};

/// `pi_{A,sigma}`: `x_A` uniform; if `x_A = sigma_A` output `sigma`, otherwise
/// the remaining coordinates are uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcubeBadSpec {
    n: usize,
    a: Vec<usize>,
    sigma: Vec<usize>,
    in_a: Vec<bool>,
}

/// Shape of `pi_{A,sigma}( . | tau)` on the free coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PinnedCase {
    /// `tau` disagrees with `sigma` on `A ∩ Λ`: uniform.
    Uniform,
    /// `tau` agrees on `A ∩ Λ` but not elsewhere on `Λ`: uniform over
    /// `x_{A\Λ} != sigma_{A\Λ}`.
    Avoid,
    /// `tau = sigma_Λ`: `sigma` with probability `sigma_weight`, otherwise as
    /// in `Avoid`.
    Mixed { sigma_weight: f64 },
}

impl SubcubeBadSpec {
    pub fn new(n: usize, mut a: Vec<usize>, sigma: Vec<usize>) -> Result<Self> {
        a.sort_unstable();
        if a.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("A", "repeated coordinate"));
        }
        let t = a.len();
        if t == 0 || t >= n {
            return Err(invalid("A", format!("need 1 <= |A| < n, got |A| = {t}, n = {n}")));
        }
        if a.iter().any(|&i| i >= n) {
            return Err(invalid("A", "index outside [n]"));
        }
        if sigma.len() != n {
            return Err(invalid("sigma", format!("expected {n} entries, got {}", sigma.len())));
        }
        if sigma.iter().any(|&s| s > 1) {
            return Err(invalid("sigma", "entries must be 0 or 1"));
        }
        let mut in_a = vec![false; n];
        for &i in &a {
            in_a[i] = true;
        }
        Ok(Self { n, a, sigma, in_a })
    }

    /// `t = ceil(log2(n/eps)) - 3`; needs `n/eps > 8` so that `t >= 1`.
    pub fn t_for(n: usize, eps: f64) -> Result<usize> {
        if !(eps > 0.0) {
            return Err(range("eps must be positive"));
        }
        let ratio = n as f64 / eps;
        let t = ceil_log2(ratio) - 3;
        if t < 1 {
            return Err(range(format!("n/eps = {ratio} gives t = {t} < 1")));
        }
        let t = t as usize;
        if t >= n {
            return Err(range(format!("t = {t} is not below n = {n}")));
        }
        Ok(t)
    }

    /// Random member of the family at distance parameter `eps`.
    pub fn for_distance<R: Rng + ?Sized>(n: usize, eps: f64, rng: &mut R) -> Result<Self> {
        let t = Self::t_for(n, eps)?;
        Self::random(n, t, rng)
    }

    /// Uniform random `A` with `|A| = t` and uniform `sigma`.
    pub fn random<R: Rng + ?Sized>(n: usize, t: usize, rng: &mut R) -> Result<Self> {
        let a = rand::seq::index::sample(rng, n, t.min(n)).into_vec();
        let sigma = (0..n).map(|_| rng.random_range(0..2)).collect();
        Self::new(n, a, sigma)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[usize] {
        &self.a
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    pub fn in_a(&self, i: usize) -> bool {
        self.in_a[i]
    }

    fn agrees_on_a(&self, x: &[usize]) -> bool {
        self.a.iter().all(|&i| x[i] == self.sigma[i])
    }

    pub fn mass(&self, x: &[usize]) -> f64 {
        if !self.agrees_on_a(x) {
            2f64.powi(-(self.n as i32))
        } else if x == self.sigma.as_slice() {
            2f64.powi(-(self.t() as i32))
        } else {
            0.0
        }
    }

    /// `KL(pi_{A,sigma} || uniform) = ln 2 (n - t) / 2^t`.
    pub fn kl_to_uniform(&self) -> f64 {
        std::f64::consts::LN_2 * (self.n - self.t()) as f64 * 2f64.powi(-(self.t() as i32))
    }

    /// `TV(pi_{A,sigma}, uniform) = 2^{-t} (1 - 2^{-(n-t)})`.
    pub fn tv_to_uniform(&self) -> f64 {
        let t = self.t() as i32;
        2f64.powi(-t) * (1.0 - 2f64.powi(-(self.n as i32 - t)))
    }

    pub(crate) fn coordinate_weights(&self, i: usize, x: &[usize], out: &mut [f64]) {
        let mut agree_a = true;
        let mut agree_all = true;
        for j in 0..self.n {
            if j == i {
                continue;
            }
            if x[j] != self.sigma[j] {
                agree_all = false;
                if self.in_a[j] {
                    agree_a = false;
                    break;
                }
            }
        }
        let sigma_weight = 2f64.powi((self.n - self.t()) as i32);
        for (a, w) in out.iter_mut().enumerate() {
            let on_sigma_a = agree_a && (!self.in_a[i] || a == self.sigma[i]);
            *w = if !on_sigma_a {
                1.0
            } else if agree_all && a == self.sigma[i] {
                sigma_weight
            } else {
                0.0
            };
        }
    }

    /// Classify the conditional law under `pin`.
    pub fn pinned_case(&self, pin: &Pinning) -> Result<PinnedCase> {
        pin.validate(self.n, 2)?;
        let mut agree_a = true;
        let mut agree_rest = true;
        let mut j = 0;
        for (i, v) in pin.as_slice().iter().enumerate() {
            let Some(v) = *v else { continue };
            if self.in_a[i] {
                j += 1;
                agree_a &= v == self.sigma[i];
            } else {
                agree_rest &= v == self.sigma[i];
            }
        }
        if !agree_a {
            return Ok(PinnedCase::Uniform);
        }
        let t = self.t() as i32;
        let j = j as i32;
        if !agree_rest {
            if j == t {
                return Err(Error::InfeasiblePinning);
            }
            return Ok(PinnedCase::Avoid);
        }
        let l = pin.pinned_count() as i32;
        let d = 2f64.powi(-t) + 2f64.powi(-l) - 2f64.powi(-(t + l - j));
        Ok(PinnedCase::Mixed { sigma_weight: 2f64.powi(-t) / d })
    }

    fn free_a_count(&self, pin: &Pinning) -> usize {
        self.a.iter().filter(|&&i| !pin.is_pinned(i)).count()
    }

    pub(crate) fn case_marginal(&self, case: &PinnedCase, i: usize, pin: &Pinning) -> Vec<f64> {
        let r = self.free_a_count(pin) as i32;
        let avoid = |i: usize| -> [f64; 2] {
            if !self.in_a[i] {
                return [0.5, 0.5];
            }
            let denom = 2f64.powi(r) - 1.0;
            let same = (2f64.powi(r - 1) - 1.0) / denom;
            let mut out = [0.0; 2];
            out[self.sigma[i]] = same;
            out[1 - self.sigma[i]] = 1.0 - same;
            out
        };
        match *case {
            PinnedCase::Uniform => vec![0.5, 0.5],
            PinnedCase::Avoid => avoid(i).to_vec(),
            PinnedCase::Mixed { sigma_weight } => {
                let mut out = if r == 0 { [0.0; 2] } else { avoid(i) };
                for v in out.iter_mut() {
                    *v *= 1.0 - sigma_weight;
                }
                out[self.sigma[i]] += sigma_weight;
                out.to_vec()
            }
        }
    }

    /// Conditional law over the free coordinates (ascending, lexicographic),
    /// written directly from the case analysis.
    pub fn conditional(&self, pin: &Pinning) -> Result<Vec<f64>> {
        let case = self.pinned_case(pin)?;
        let free = pin.free_coords();
        let size = crate::models::check_guard(free.len(), 2)?;
        let ell = pin.pinned_count() as i32;
        let m = free.len() as i32;
        let t = self.t() as i32;
        let j = t - self.free_a_count(pin) as i32;
        let mut out = vec![0.0; size];
        let mut digits = vec![0usize; free.len()];
        for slot in out.iter_mut() {
            let off_sigma_a = free.iter().zip(&digits).any(|(&c, &d)| self.in_a[c] && d != self.sigma[c]);
            let is_sigma = free.iter().zip(&digits).all(|(&c, &d)| d == self.sigma[c]);
            *slot = match case {
                PinnedCase::Uniform => 2f64.powi(-m),
                PinnedCase::Avoid => {
                    if off_sigma_a {
                        1.0 / (2f64.powi(m) - 2f64.powi(m - t + j))
                    } else {
                        0.0
                    }
                }
                PinnedCase::Mixed { .. } => {
                    let d = 2f64.powi(-t) + 2f64.powi(-ell) - 2f64.powi(-(t + ell - j));
                    if off_sigma_a {
                        2f64.powi(-(self.n as i32)) / d
                    } else if is_sigma {
                        2f64.powi(-t) / d
                    } else {
                        0.0
                    }
                }
            };
            crate::models::increment(&mut digits, 2);
        }
        Ok(out)
    }

    /// Closed-form TV between the conditional under `pin` and the uniform law
    /// on the free coordinates.
    pub fn conditional_tv_to_uniform(&self, pin: &Pinning) -> Result<f64> {
        let ell = pin.pinned_count() as i32;
        let t = self.t() as i32;
        let j = t - self.free_a_count(pin) as i32;
        Ok(match self.pinned_case(pin)? {
            PinnedCase::Uniform => 0.0,
            PinnedCase::Avoid => 2f64.powi(-(t - j)),
            PinnedCase::Mixed { .. } => case3_tv(self.n as i32, t, ell, j),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [usize]) {
        let mut on_sigma = true;
        for &i in &self.a {
            out[i] = rng.random_range(0..2);
            on_sigma &= out[i] == self.sigma[i];
        }
        if on_sigma {
            out.copy_from_slice(&self.sigma);
            return;
        }
        for i in 0..self.n {
            if !self.in_a[i] {
                out[i] = rng.random_range(0..2);
            }
        }
    }

    /// Fill the free coordinates of `x` with a draw from the conditional
    /// under `pin` (pinned entries of `x` are left as they are).
    pub fn sample_conditional<R: Rng + ?Sized>(
        &self,
        case: PinnedCase,
        pin: &Pinning,
        rng: &mut R,
        x: &mut [usize],
    ) {
        let fill_uniform = |x: &mut [usize], rng: &mut R, only_a: Option<bool>| {
            for i in 0..self.n {
                if !pin.is_pinned(i) && only_a.is_none_or(|a| self.in_a[i] == a) {
                    x[i] = rng.random_range(0..2);
                }
            }
        };
        let avoid = |x: &mut [usize], rng: &mut R| {
            loop {
                fill_uniform(x, rng, Some(true));
                let hit = self.a.iter().any(|&i| !pin.is_pinned(i) && x[i] != self.sigma[i]);
                if hit {
                    break;
                }
            }
            fill_uniform(x, rng, Some(false));
        };
        match case {
            PinnedCase::Uniform => fill_uniform(x, rng, None),
            PinnedCase::Avoid => avoid(x, rng),
            PinnedCase::Mixed { sigma_weight } => {
                if rng.random::<f64>() < sigma_weight {
                    for i in 0..self.n {
                        if !pin.is_pinned(i) {
                            x[i] = self.sigma[i];
                        }
                    }
                } else {
                    avoid(x, rng);
                }
            }
        }
    }
}

fn case3_tv(n: i32, t: i32, ell: i32, j: i32) -> f64 {
    2f64.powi(ell) / (2f64.powi(t) + 2f64.powi(ell) - 2f64.powi(j)) - 2f64.powi(-(n - ell))
}

/// Expected TV between `pi( . | tau)` and the uniform conditional, averaged
/// over a uniformly random member of the family at `(n, eps)`, for any fixed
/// pinning of `ell` coordinates. Infeasible pinnings count as TV 1.
pub fn expected_conditional_tv(n: usize, eps: f64, ell: usize) -> Result<f64> {
    let t = SubcubeBadSpec::t_for(n, eps)?;
    if ell > n {
        return Err(range(format!("|Λ| = {ell} exceeds n = {n}")));
    }
    let total = ln_choose(n as u64, t as u64);
    let mut acc = 0.0;
    for j in t.saturating_sub(n - ell)..=t.min(ell) {
        let w = (ln_choose(ell as u64, j as u64) + ln_choose((n - ell) as u64, (t - j) as u64) - total).exp();
        acc += w * expected_tv_given_overlap(n, t, ell, j);
    }
    Ok(acc)
}

/// The same expectation for a fixed `A` with `|A ∩ Λ| = j`, averaged over
/// `sigma` only.
pub fn expected_tv_given_overlap(n: usize, t: usize, ell: usize, j: usize) -> f64 {
    let (n, t, ell, j) = (n as i32, t as i32, ell as i32, j as i32);
    (2f64.powi(-j) - 2f64.powi(-ell)) * 2f64.powi(-(t - j)) + 2f64.powi(-ell) * case3_tv(n, t, ell, j)
}

/// `pi_M`: independent 2-spin Gibbs pairs with coupling `beta` along a
/// matching; an odd leftover coordinate is uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedIsingSpec {
    n: usize,
    pairs: Vec<(usize, usize)>,
    partner: Vec<Option<usize>>,
    beta: f64,
}

impl MatchedIsingSpec {
    pub fn new(n: usize, pairs: Vec<(usize, usize)>, beta: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(invalid("beta", "must be finite"));
        }
        let mut partner = vec![None; n];
        for &(u, v) in &pairs {
            if u >= n || v >= n || u == v {
                return Err(invalid("matching", format!("bad pair ({u},{v})")));
            }
            if partner[u].is_some() || partner[v].is_some() {
                return Err(invalid("matching", format!("pair ({u},{v}) reuses a coordinate")));
            }
            partner[u] = Some(v);
            partner[v] = Some(u);
        }
        let unmatched = partner.iter().filter(|p| p.is_none()).count();
        if unmatched != n % 2 {
            return Err(invalid("matching", format!("{unmatched} coordinates left unmatched")));
        }
        Ok(Self { n, pairs, partner, beta })
    }

    /// Pairs `(0,1), (2,3), ..`.
    pub fn consecutive(n: usize, beta: f64) -> Result<Self> {
        Self::new(n, (0..n / 2).map(|p| (2 * p, 2 * p + 1)).collect(), beta)
    }

    /// A uniformly random matching.
    pub fn random<R: Rng + ?Sized>(n: usize, beta: f64, rng: &mut R) -> Result<Self> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self::new(n, order.chunks_exact(2).map(|c| (c[0], c[1])).collect(), beta)
    }

    /// `beta = rho * eps / sqrt(n)`.
    pub fn beta_for(n: usize, rho: f64, eps: f64) -> f64 {
        rho * eps / (n as f64).sqrt()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn partner(&self, i: usize) -> Option<usize> {
        self.partner[i]
    }

    /// Probability that a matched pair agrees: `(1 + tanh beta) / 2`.
    pub fn agree_prob(&self) -> f64 {
        (1.0 + self.beta.tanh()) / 2.0
    }

    pub(crate) fn log_weight(&self, x: &[usize]) -> f64 {
        self.pairs.iter().map(|&(u, v)| self.beta * spin(x[u]) * spin(x[v])).sum()
    }

    pub fn mass(&self, x: &[usize]) -> f64 {
        let p = self.agree_prob();
        let pairs: f64 = self
            .pairs
            .iter()
            .map(|&(u, v)| if x[u] == x[v] { p / 2.0 } else { (1.0 - p) / 2.0 })
            .product();
        pairs * 0.5f64.powi((self.n % 2) as i32)
    }

    pub(crate) fn coordinate_weights(&self, i: usize, x: &[usize], out: &mut [f64]) {
        match self.partner[i] {
            Some(j) => {
                let p = self.agree_prob();
                out[x[j]] = p;
                out[1 - x[j]] = 1.0 - p;
            }
            None => out.fill(1.0),
        }
    }

    pub fn conditional_marginal(&self, i: usize, pin: &Pinning) -> Result<Vec<f64>> {
        let mut out = vec![0.5, 0.5];
        if let Some(s) = self.partner[i].and_then(|j| pin.get(j)) {
            let p = self.agree_prob();
            out[s] = p;
            out[1 - s] = 1.0 - p;
        }
        Ok(out)
    }

    /// Exact `TV(pi_M, uniform)`: equals `TV(Bin(m, p), Bin(m, 1/2))` with
    /// `m` pairs and agreement probability `p`.
    pub fn tv_to_uniform(&self) -> f64 {
        let m = self.pairs.len() as u64;
        let p = self.agree_prob();
        let mut acc = 0.0;
        for a in 0..=m {
            let c = ln_choose(m, a);
            let lp = c + a as f64 * p.ln() + (m - a) as f64 * (1.0 - p).ln();
            let lu = c - m as f64 * std::f64::consts::LN_2;
            acc += (lp.exp() - lu.exp()).abs();
        }
        acc / 2.0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [usize]) {
        let p = self.agree_prob();
        for &(u, v) in &self.pairs {
            out[u] = rng.random_range(0..2);
            out[v] = if rng.random::<f64>() < p { out[u] } else { 1 - out[u] };
        }
        if self.n % 2 == 1 {
            let i = self.partner.iter().position(Option::is_none).expect("odd n leaves one coordinate");
            out[i] = rng.random_range(0..2);
        }
    }

    /// Fill the free coordinates of `x` from the conditional under `pin`.
    pub fn sample_conditional<R: Rng + ?Sized>(&self, pin: &Pinning, rng: &mut R, x: &mut [usize]) {
        let p = self.agree_prob();
        for i in 0..self.n {
            if pin.is_pinned(i) {
                continue;
            }
            match self.partner[i] {
                Some(j) if pin.is_pinned(j) || j < i => {
                    x[i] = if rng.random::<f64>() < p { x[j] } else { 1 - x[j] };
                }
                _ => x[i] = rng.random_range(0..2),
            }
        }
    }
}
