use rand::Rng;

use super::SmallDistribution;
use crate::error::{range, Error, Result};

/// Split of each symbol `a` into `copies[a]` equal parts. Symbols with zero
/// mass get no copies.
#[derive(Debug, Clone, PartialEq)]
pub struct Flattening {
    pub copies: Vec<usize>,
    pub offsets: Vec<usize>,
    pub flat: SmallDistribution,
}

impl Flattening {
    fn build(q: &SmallDistribution, copies: Vec<usize>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(copies.len());
        let mut masses = Vec::new();
        for (a, &c) in copies.iter().enumerate() {
            offsets.push(masses.len());
            let share = q.masses()[a] / c.max(1) as f64;
            masses.extend(std::iter::repeat_n(share, c));
        }
        let flat = SmallDistribution::new(masses)?;
        Ok(Self { copies, offsets, flat })
    }

    pub fn k_flat(&self) -> usize {
        self.flat.k()
    }

    /// Send a sample to a uniformly random copy of its symbol.
    pub fn map<R: Rng + ?Sized>(&self, symbol: usize, rng: &mut R) -> Result<usize> {
        match self.copies.get(symbol) {
            Some(&c) if c > 0 => Ok(self.offsets[symbol] + rng.random_range(0..c)),
            _ => Err(Error::UnsupportedSymbol { symbol }),
        }
    }

    /// Push a distribution on the original alphabet through the split.
    pub fn push_forward(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k_flat()];
        for (a, &pa) in p.iter().enumerate() {
            let c = self.copies[a];
            for j in 0..c {
                out[self.offsets[a] + j] = pa / c as f64;
            }
        }
        out
    }

    /// Original symbol of a flattened symbol.
    pub fn source(&self, flat_symbol: usize) -> usize {
        self.offsets.partition_point(|&o| o <= flat_symbol) - 1
    }
}

/// Guards the floors below against values a hair under an integer.
const FLOOR_SLACK: f64 = 1e-9;

/// `k_a = floor(q(a)/eta) + 1`: every flattened mass lies in `[eta/2, eta]`.
pub fn flatten_eta(q: &SmallDistribution, eta: f64) -> Result<Flattening> {
    if !(eta > 0.0) || eta > q.eta_min() + 1e-12 {
        return Err(range(format!("eta {eta} must be positive and at most {}", q.eta_min())));
    }
    let copies = q
        .masses()
        .iter()
        .map(|&m| if m > 0.0 { (m / eta + FLOOR_SLACK).floor() as usize + 1 } else { 0 })
        .collect();
    Flattening::build(q, copies)
}

/// `k_a = floor(k q(a)) + 1` with `k` the support size: flattened masses are
/// at most `2/k'` and `||q'||_2^2 <= 2/k'`.
pub fn flatten_k(q: &SmallDistribution) -> Result<Flattening> {
    let k = q.support_size() as f64;
    let copies = q
        .masses()
        .iter()
        .map(|&m| if m > 0.0 { (k * m + FLOOR_SLACK).floor() as usize + 1 } else { 0 })
        .collect();
    Flattening::build(q, copies)
}
