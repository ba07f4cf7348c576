//! Distribution descriptions over `Q^n` with `Q = {0, .., k-1}`, and exact
//! computations at desk scale.
//!
//! Outcomes are indexed lexicographically with coordinate 0 most significant.

mod file;
mod measures;

pub use file::ModelFile;
pub use measures::{
    balance_profile, chain_rule_decomposition, dobrushin_certificate, dobrushin_constant,
    entropy, influence_matrix, kl_divergence, tv_distance, verify_tensorization, BalanceProfile,
    DobrushinCertificate, TensorizationCheck,
};

use std::ops::Deref;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::adversaries::{MatchedIsingSpec, SubcubeBadSpec};
use crate::error::{invalid, Error, Result};
use crate::numerics::{softmax_in_place, CompensatedSum};

/// Largest state space any exact enumeration may touch.
pub const GUARD_STATES: u128 = 1 << 22;

pub const MASS_TOLERANCE: f64 = 1e-12;

/// `k^n`, saturating at `u128::MAX`.
pub fn state_count(n: usize, k: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..n {
        acc = match acc.checked_mul(k as u128) {
            Some(v) => v,
            None => return u128::MAX,
        };
    }
    acc
}

pub(crate) fn check_states(states: u128) -> Result<usize> {
    if states > GUARD_STATES {
        return Err(Error::ScaleGuardExceeded { states, limit: GUARD_STATES });
    }
    Ok(states as usize)
}

/// `k^n` if it is within the enumeration guard.
pub fn check_guard(n: usize, k: usize) -> Result<usize> {
    check_states(state_count(n, k))
}

pub fn index_of(x: &[usize], k: usize) -> usize {
    x.iter().fold(0, |acc, &s| acc * k + s)
}

pub fn config_at(mut index: usize, n: usize, k: usize) -> Vec<usize> {
    let mut x = vec![0; n];
    for slot in x.iter_mut().rev() {
        *slot = index % k;
        index /= k;
    }
    x
}

/// Advance `digits` to the next tuple in lexicographic order. Returns false
/// after the last tuple.
pub(crate) fn increment(digits: &mut [usize], k: usize) -> bool {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < k {
            return true;
        }
        *d = 0;
    }
    false
}

#[inline]
pub(crate) fn spin(symbol: usize) -> f64 {
    if symbol == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A full assignment `x in Q^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration(Vec<usize>);

impl Configuration {
    pub fn new(values: Vec<usize>, n: usize, k: usize) -> Result<Self> {
        validate_config(&values, n, k)?;
        Ok(Self(values))
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl Deref for Configuration {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for Configuration {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

pub(crate) fn validate_config(x: &[usize], n: usize, k: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if let Some(&symbol) = x.iter().find(|&&s| s >= k) {
        return Err(Error::InvalidSymbol { symbol, k });
    }
    Ok(())
}

/// A partial assignment: `Some(v)` on the pinned set, `None` elsewhere.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pinning {
    values: Vec<Option<usize>>,
}

impl Pinning {
    pub fn new(values: Vec<Option<usize>>) -> Self {
        Self { values }
    }

    /// Nothing pinned.
    pub fn free(n: usize) -> Self {
        Self { values: vec![None; n] }
    }

    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut values = vec![None; n];
        for &(i, v) in pairs {
            if i >= n {
                return Err(Error::DimensionMismatch { expected: n, got: i + 1 });
            }
            values[i] = Some(v);
        }
        Ok(Self { values })
    }

    /// Pin every coordinate of `x` except `i`.
    pub fn all_but(x: &[usize], i: usize) -> Self {
        let mut values: Vec<Option<usize>> = x.iter().map(|&s| Some(s)).collect();
        values[i] = None;
        Self { values }
    }

    /// Pin coordinates `0..prefix.len()`.
    pub fn prefix(n: usize, prefix: &[usize]) -> Self {
        let mut values = vec![None; n];
        for (slot, &s) in values.iter_mut().zip(prefix) {
            *slot = Some(s);
        }
        Self { values }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize) -> Option<usize> {
        self.values[i]
    }

    pub fn set(&mut self, i: usize, v: Option<usize>) {
        self.values[i] = v;
    }

    pub fn is_pinned(&self, i: usize) -> bool {
        self.values[i].is_some()
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.values
    }

    /// The pinned set, ascending.
    pub fn domain(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.is_pinned(i)).collect()
    }

    /// The unpinned coordinates, ascending.
    pub fn free_coords(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.is_pinned(i)).collect()
    }

    pub fn pinned_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn validate(&self, n: usize, k: usize) -> Result<()> {
        if self.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.n() });
        }
        if let Some(symbol) = self.values.iter().flatten().copied().find(|&s| s >= k) {
            return Err(Error::InvalidSymbol { symbol, k });
        }
        Ok(())
    }

    /// Fill pinned entries into `x`, leaving free entries untouched.
    pub(crate) fn write_into(&self, x: &mut [usize]) {
        for (slot, v) in x.iter_mut().zip(&self.values) {
            if let Some(v) = v {
                *slot = *v;
            }
        }
    }
}

/// Ising model on `{+1,-1}^n` with symbol 0 standing for spin +1.
#[derive(Debug, Clone, PartialEq)]
pub struct Ising {
    edges: Vec<(usize, usize, f64)>,
    fields: Vec<f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl Ising {
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    /// `h_i + sum_j beta_ij s_j`.
    #[inline]
    pub fn local_field(&self, i: usize, x: &[usize]) -> f64 {
        self.fields[i]
            + self.neighbors[i].iter().map(|&(j, b)| b * spin(x[j])).sum::<f64>()
    }

    fn log_weight(&self, x: &[usize]) -> f64 {
        let pair: f64 = self.edges.iter().map(|&(u, v, b)| b * spin(x[u]) * spin(x[v])).sum();
        let field: f64 = self.fields.iter().zip(x).map(|(h, &s)| h * spin(s)).sum();
        pair + field
    }

    /// Largest vertex degree and largest absolute coupling.
    pub fn degree_and_coupling(&self) -> (usize, f64) {
        let deg = self.neighbors.iter().map(Vec::len).max().unwrap_or(0);
        let beta = self.edges.iter().map(|e| e.2.abs()).fold(0.0, f64::max);
        (deg, beta)
    }

    /// Sufficient condition `(deg - 1) tanh(beta*) <= 1 - delta` for the tree
    /// uniqueness regime.
    pub fn in_uniqueness(&self, delta: f64) -> bool {
        let (deg, beta) = self.degree_and_coupling();
        deg.saturating_sub(1) as f64 * beta.tanh() <= 1.0 - delta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    Uniform,
    Product { coords: Vec<Vec<f64>> },
    Ising(Ising),
    ExplicitTable { masses: Vec<f64> },
    SubcubeBad(SubcubeBadSpec),
    MatchedIsing(MatchedIsingSpec),
    /// Finite mixture of product distributions.
    ProductMixture { weights: Vec<f64>, components: Vec<Vec<Vec<f64>>> },
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Uniform => "Uniform",
            Variant::Product { .. } => "Product",
            Variant::Ising(_) => "Ising",
            Variant::ExplicitTable { .. } => "ExplicitTable",
            Variant::SubcubeBad(_) => "SubcubeBad",
            Variant::MatchedIsing(_) => "MatchedIsing",
            Variant::ProductMixture { .. } => "ProductMixture",
        }
    }
}

/// Enumerated masses with their running sums.
#[derive(Debug)]
pub struct Table {
    pub masses: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl Table {
    fn new(masses: Vec<f64>) -> Self {
        let mut acc = CompensatedSum::new();
        let cumulative = masses
            .iter()
            .map(|&m| {
                acc.add(m);
                acc.value()
            })
            .collect();
        Self { masses, cumulative }
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// A validated distribution on `Q^n`. Immutable; exact tables are built
/// lazily and cached.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    n: usize,
    k: usize,
    variant: Variant,
    table: OnceLock<Arc<Table>>,
}

impl PartialEq for ModelSpec {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.k == other.k && self.variant == other.variant
    }
}

pub(crate) fn validate_masses(field: &str, masses: &[f64]) -> Result<()> {
    if masses.is_empty() {
        return Err(invalid(field, "empty mass vector"));
    }
    if let Some(m) = masses.iter().find(|m| !m.is_finite() || **m < 0.0) {
        return Err(invalid(field, format!("mass {m} is negative or not finite")));
    }
    let total: f64 = masses.iter().sum();
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(invalid(field, format!("masses sum to {total}, not 1")));
    }
    Ok(())
}

impl ModelSpec {
    fn build(n: usize, k: usize, variant: Variant) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "dimension must be at least 1"));
        }
        if k < 2 {
            return Err(invalid("k", "alphabet must have at least 2 symbols"));
        }
        Ok(Self { n, k, variant, table: OnceLock::new() })
    }

    pub fn uniform(n: usize, k: usize) -> Result<Self> {
        Self::build(n, k, Variant::Uniform)
    }

    pub fn product(coords: Vec<Vec<f64>>) -> Result<Self> {
        let n = coords.len();
        let k = coords.first().map_or(0, Vec::len);
        for (i, c) in coords.iter().enumerate() {
            if c.len() != k {
                return Err(invalid("coords", format!("coordinate {i} has {} masses, expected {k}", c.len())));
            }
            validate_masses("coords", c)?;
        }
        Self::build(n, k, Variant::Product { coords })
    }

    /// `n` independent copies of one coordinate law.
    pub fn product_iid(n: usize, masses: &[f64]) -> Result<Self> {
        Self::product(vec![masses.to_vec(); n])
    }

    pub fn ising(n: usize, edges: Vec<(usize, usize, f64)>, fields: Vec<f64>) -> Result<Self> {
        if fields.len() != n {
            return Err(invalid("fields", format!("expected {n} entries, got {}", fields.len())));
        }
        if fields.iter().any(|h| !h.is_finite()) {
            return Err(invalid("fields", "fields must be finite"));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v, b) in &edges {
            if u >= n || v >= n {
                return Err(invalid("edges", format!("edge ({u},{v}) leaves the vertex set")));
            }
            if u == v {
                return Err(invalid("edges", format!("self-loop at {u}")));
            }
            if !b.is_finite() {
                return Err(invalid("edges", "couplings must be finite"));
            }
            if neighbors[u].iter().any(|&(w, _)| w == v) {
                return Err(invalid("edges", format!("duplicate edge ({u},{v})")));
            }
            neighbors[u].push((v, b));
            neighbors[v].push((u, b));
        }
        Self::build(n, 2, Variant::Ising(Ising { edges, fields, neighbors }))
    }

    /// Ising on the path `0 - 1 - .. - (n-1)` with uniform coupling, no field.
    pub fn ising_path(n: usize, beta: f64) -> Result<Self> {
        let edges = (1..n).map(|v| (v - 1, v, beta)).collect();
        Self::ising(n, edges, vec![0.0; n])
    }

    pub fn explicit(n: usize, k: usize, masses: Vec<f64>) -> Result<Self> {
        let states = check_guard(n, k)?;
        if masses.len() != states {
            return Err(invalid("masses", format!("expected {states} entries, got {}", masses.len())));
        }
        validate_masses("masses", &masses)?;
        Self::build(n, k, Variant::ExplicitTable { masses })
    }

    pub fn subcube_bad(spec: SubcubeBadSpec) -> Self {
        Self { n: spec.n(), k: 2, variant: Variant::SubcubeBad(spec), table: OnceLock::new() }
    }

    pub fn matched_ising(spec: MatchedIsingSpec) -> Self {
        Self { n: spec.n(), k: 2, variant: Variant::MatchedIsing(spec), table: OnceLock::new() }
    }

    pub fn product_mixture(weights: Vec<f64>, components: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        validate_masses("weights", &weights)?;
        if components.len() != weights.len() {
            return Err(invalid("components", "one component per weight is required"));
        }
        let n = components[0].len();
        let k = components[0].first().map_or(0, Vec::len);
        for comp in &components {
            if comp.len() != n {
                return Err(invalid("components", "components disagree on n"));
            }
            for c in comp {
                if c.len() != k {
                    return Err(invalid("components", "components disagree on k"));
                }
                validate_masses("components", c)?;
            }
        }
        Self::build(n, k, Variant::ProductMixture { weights, components })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub fn variant_name(&self) -> &'static str {
        self.variant.name()
    }

    /// True when every configuration has positive mass.
    pub fn has_full_support(&self) -> bool {
        match &self.variant {
            Variant::Uniform | Variant::Ising(_) | Variant::MatchedIsing(_) => true,
            Variant::Product { coords } => coords.iter().flatten().all(|&m| m > 0.0),
            Variant::ExplicitTable { masses } => masses.iter().all(|&m| m > 0.0),
            Variant::SubcubeBad(_) => false,
            Variant::ProductMixture { components, .. } => {
                components.iter().any(|c| c.iter().flatten().all(|&m| m > 0.0))
            }
        }
    }

    /// Unnormalised log-weight; `-inf` marks zero mass.
    pub(crate) fn log_weight_unchecked(&self, x: &[usize]) -> f64 {
        match &self.variant {
            Variant::Uniform => 0.0,
            Variant::Product { coords } => coords.iter().zip(x).map(|(c, &s)| c[s].ln()).sum(),
            Variant::Ising(ising) => ising.log_weight(x),
            Variant::ExplicitTable { masses } => masses[index_of(x, self.k)].ln(),
            Variant::SubcubeBad(spec) => spec.mass(x).ln(),
            Variant::MatchedIsing(spec) => spec.log_weight(x),
            Variant::ProductMixture { weights, components } => {
                mixture_log_mass(weights, components, x)
            }
        }
    }

    pub fn log_weight(&self, x: &[usize]) -> Result<f64> {
        validate_config(x, self.n, self.k)?;
        Ok(self.log_weight_unchecked(x))
    }

    /// `mu(x)`.
    pub fn mass(&self, x: &[usize]) -> Result<f64> {
        validate_config(x, self.n, self.k)?;
        Ok(self.mass_unchecked(x)?)
    }

    fn mass_unchecked(&self, x: &[usize]) -> Result<f64> {
        Ok(match &self.variant {
            Variant::Uniform => (self.k as f64).powi(-(self.n as i32)),
            Variant::Product { coords } => coords.iter().zip(x).map(|(c, &s)| c[s]).product(),
            Variant::Ising(_) => self.table()?.masses[index_of(x, self.k)],
            Variant::ExplicitTable { masses } => masses[index_of(x, self.k)],
            Variant::SubcubeBad(spec) => spec.mass(x),
            Variant::MatchedIsing(spec) => spec.mass(x),
            Variant::ProductMixture { weights, components } => {
                mixture_log_mass(weights, components, x).exp()
            }
        })
    }

    pub fn is_feasible(&self, x: &[usize]) -> bool {
        self.log_weight_unchecked(x) > f64::NEG_INFINITY
    }

    /// Full probability table, built on first use.
    pub fn table(&self) -> Result<Arc<Table>> {
        let states = check_guard(self.n, self.k)?;
        Ok(self.table.get_or_init(|| Arc::new(Table::new(self.enumerate(states)))).clone())
    }

    fn enumerate(&self, states: usize) -> Vec<f64> {
        if let Variant::ExplicitTable { masses } = &self.variant {
            return masses.clone();
        }
        let mut x = vec![0; self.n];
        let mut out = Vec::with_capacity(states);
        if let Variant::Ising(ising) = &self.variant {
            loop {
                out.push(ising.log_weight(&x));
                if !increment(&mut x, self.k) {
                    break;
                }
            }
            softmax_in_place(&mut out);
            return out;
        }
        loop {
            out.push(self.mass_unchecked(&x).expect("closed-form mass"));
            if !increment(&mut x, self.k) {
                break;
            }
        }
        out
    }

    /// Relative weights of coordinate `i` given the other entries of `x`
    /// (`x[i]` is ignored). Returns false if every weight vanishes.
    pub(crate) fn coordinate_weights(&self, i: usize, x: &[usize], out: &mut [f64]) -> bool {
        let k = self.k;
        match &self.variant {
            Variant::Uniform => out.fill(1.0),
            Variant::Product { coords } => out.copy_from_slice(&coords[i]),
            Variant::Ising(ising) => {
                let f = ising.local_field(i, x);
                // Shift by |f| so neither exponent overflows.
                out[0] = (f - f.abs()).exp();
                out[1] = (-f - f.abs()).exp();
            }
            Variant::ExplicitTable { masses } => {
                let stride = k.pow((self.n - 1 - i) as u32);
                let base = index_of(x, k) - x[i] * stride;
                for (a, w) in out.iter_mut().enumerate() {
                    *w = masses[base + a * stride];
                }
            }
            Variant::SubcubeBad(spec) => spec.coordinate_weights(i, x, out),
            Variant::MatchedIsing(spec) => spec.coordinate_weights(i, x, out),
            Variant::ProductMixture { weights, components } => {
                let mut post: Vec<f64> = weights
                    .iter()
                    .zip(components)
                    .map(|(w, comp)| {
                        w.ln()
                            + comp
                                .iter()
                                .enumerate()
                                .filter(|&(j, _)| j != i)
                                .map(|(j, c)| c[x[j]].ln())
                                .sum::<f64>()
                    })
                    .collect();
                if softmax_in_place(&mut post).is_none() {
                    out.fill(0.0);
                    return false;
                }
                for (a, w) in out.iter_mut().enumerate() {
                    *w = post.iter().zip(components).map(|(p, comp)| p * comp[i][a]).sum();
                }
            }
        }
        out.iter().any(|&w| w > 0.0)
    }

    /// `mu_i( . | pin)` for any pinning that leaves `i` free.
    pub fn conditional_marginal(&self, i: usize, pin: &Pinning) -> Result<Vec<f64>> {
        pin.validate(self.n, self.k)?;
        if i >= self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: i + 1 });
        }
        if pin.is_pinned(i) {
            return Err(Error::InvalidRange(format!("coordinate {i} is pinned")));
        }
        let k = self.k;
        if pin.pinned_count() + 1 == self.n {
            let mut x = vec![0; self.n];
            pin.write_into(&mut x);
            let mut w = vec![0.0; k];
            if !self.coordinate_weights(i, &x, &mut w) {
                return Err(Error::ZeroProbabilityPinning);
            }
            let z: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= z);
            return Ok(w);
        }
        match &self.variant {
            Variant::Uniform => Ok(vec![1.0 / k as f64; k]),
            Variant::Product { coords } => {
                let feasible = pin.as_slice().iter().enumerate().all(|(j, v)| v.is_none_or(|s| coords[j][s] > 0.0));
                if !feasible {
                    return Err(Error::ZeroProbabilityPinning);
                }
                Ok(coords[i].clone())
            }
            Variant::ProductMixture { weights, components } => {
                let post = mixture_posterior(weights, components, pin)?;
                Ok((0..k)
                    .map(|a| post.iter().zip(components).map(|(p, comp)| p * comp[i][a]).sum())
                    .collect())
            }
            Variant::MatchedIsing(spec) => spec.conditional_marginal(i, pin),
            Variant::SubcubeBad(spec) => {
                let case = spec.pinned_case(pin)?;
                Ok(spec.case_marginal(&case, i, pin))
            }
            Variant::Ising(_) | Variant::ExplicitTable { .. } => {
                let free = pin.free_coords();
                let pos = free.iter().position(|&j| j == i).expect("i is free");
                let joint = self.conditional_joint(pin)?;
                let mut out = vec![0.0; k];
                let stride = k.pow((free.len() - 1 - pos) as u32);
                for (idx, m) in joint.iter().enumerate() {
                    out[(idx / stride) % k] += m;
                }
                Ok(out)
            }
        }
    }

    /// Conditional law of the free coordinates (ascending order, lexicographic
    /// index) given `pin`, by enumeration of the free block.
    pub fn conditional_joint(&self, pin: &Pinning) -> Result<Vec<f64>> {
        pin.validate(self.n, self.k)?;
        let free = pin.free_coords();
        let states = check_guard(free.len(), self.k)?;
        let mut x = vec![0; self.n];
        pin.write_into(&mut x);
        let mut digits = vec![0; free.len()];
        let mut lw = Vec::with_capacity(states);
        loop {
            for (&j, &d) in free.iter().zip(&digits) {
                x[j] = d;
            }
            lw.push(self.log_weight_unchecked(&x));
            if !increment(&mut digits, self.k) {
                break;
            }
        }
        softmax_in_place(&mut lw).ok_or(Error::ZeroProbabilityPinning)?;
        Ok(lw)
    }
}

fn mixture_log_mass(weights: &[f64], components: &[Vec<Vec<f64>>], x: &[usize]) -> f64 {
    let total: f64 = weights
        .iter()
        .zip(components)
        .map(|(w, comp)| w * comp.iter().zip(x).map(|(c, &s)| c[s]).product::<f64>())
        .sum();
    total.ln()
}

fn mixture_posterior(weights: &[f64], components: &[Vec<Vec<f64>>], pin: &Pinning) -> Result<Vec<f64>> {
    let mut post: Vec<f64> = weights
        .iter()
        .zip(components)
        .map(|(w, comp)| {
            w.ln()
                + pin
                    .as_slice()
                    .iter()
                    .enumerate()
                    .filter_map(|(j, v)| v.map(|s| comp[j][s].ln()))
                    .sum::<f64>()
        })
        .collect();
    softmax_in_place(&mut post).ok_or(Error::ZeroProbabilityPinning)?;
    Ok(post)
}


#[cfg(test)]
mod tests;
