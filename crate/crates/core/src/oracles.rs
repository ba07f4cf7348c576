//! Query-counted sampling oracles for a hidden distribution.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::constants;
use crate::error::{Error, Result};
use crate::models::{validate_config, Configuration, ModelSpec, Pinning, Table, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    General,
    Coordinate,
    Subcube,
    Pairwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    General,
    Coordinate,
    Subcube,
    Pairwise,
}

impl OracleMode {
    /// Subcube access subsumes coordinate and general access; pairwise access
    /// comes with general samples.
    pub fn permits(self, q: Query) -> bool {
        use OracleMode as M;
        use Query as Q;
        matches!(
            (self, q),
            (_, Q::General)
                | (M::Coordinate | M::Subcube, Q::Coordinate)
                | (M::Subcube, Q::Subcube)
                | (M::Pairwise, Q::Pairwise)
        )
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "general" => Some(Self::General),
            "coordinate" => Some(Self::Coordinate),
            "subcube" => Some(Self::Subcube),
            "pairwise" => Some(Self::Pairwise),
            _ => None,
        }
    }
}

impl fmt::Display for OracleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::General => "general",
            Self::Coordinate => "coordinate",
            Self::Subcube => "subcube",
            Self::Pairwise => "pairwise",
        };
        f.write_str(s)
    }
}

/// How general samples are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Inverse CDF over the enumerated table.
    Exact,
    /// Random-scan single-site updates from a uniform start, fresh chain per
    /// sample. `None` uses the default burn-in.
    Glauber { steps: Option<usize> },
    /// The variant's own generative sampler; falls back to the table for
    /// variants without one.
    Structural,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exact => f.write_str("exact"),
            Self::Glauber { steps: None } => f.write_str("glauber"),
            Self::Glauber { steps: Some(s) } => write!(f, "glauber({s})"),
            Self::Structural => f.write_str("structural"),
        }
    }
}

pub fn default_glauber_steps(n: usize) -> usize {
    (constants().glauber.burn_in_factor * n as f64 * ((n + 1) as f64).ln()).ceil() as usize
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCounts {
    pub general: u64,
    pub coordinate: u64,
    pub subcube: u64,
    pub pairwise: u64,
}

impl QueryCounts {
    pub fn total(&self) -> u64 {
        self.general + self.coordinate + self.subcube + self.pairwise
    }
}

/// Largest alphabet for the pairwise-to-coordinate chain.
pub const PAIRWISE_CHAIN_MAX_K: usize = 16;

pub struct OracleHandle {
    model: Arc<ModelSpec>,
    mode: OracleMode,
    backend: Backend,
    counts: QueryCounts,
    rng: ChaCha8Rng,
    table: Option<Arc<Table>>,
    glauber_steps: usize,
    weights: Vec<f64>,
    scratch: Vec<usize>,
    /// Cumulative conditional law of the free block for the last pinning
    /// served by enumeration (`None` when that pinning was infeasible).
    joint_cache: Option<(Pinning, Option<Vec<f64>>)>,
}

fn has_direct_sampler(v: &Variant) -> bool {
    matches!(
        v,
        Variant::Uniform
            | Variant::Product { .. }
            | Variant::SubcubeBad(_)
            | Variant::MatchedIsing(_)
            | Variant::ProductMixture { .. }
    )
}

#[inline]
pub(crate) fn sample_weights<R: Rng + ?Sized>(rng: &mut R, w: &[f64]) -> usize {
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (a, &x) in w.iter().enumerate() {
        if x > 0.0 {
            if u < x {
                return a;
            }
            u -= x;
            last = a;
        }
    }
    last
}

impl OracleHandle {
    pub fn new(model: Arc<ModelSpec>, mode: OracleMode, backend: Backend, rng: ChaCha8Rng) -> Result<Self> {
        let table = match backend {
            Backend::Exact => Some(model.table()?),
            Backend::Structural if !has_direct_sampler(model.variant()) => Some(model.table()?),
            Backend::Structural => None,
            Backend::Glauber { .. } => {
                if !model.has_full_support() {
                    return Err(Error::BackendUnsupported {
                        backend: backend.to_string(),
                        variant: model.variant_name(),
                    });
                }
                None
            }
        };
        let glauber_steps = match backend {
            Backend::Glauber { steps: Some(s) } => s,
            _ => default_glauber_steps(model.n()),
        };
        let (n, k) = (model.n(), model.k());
        Ok(Self {
            model,
            mode,
            backend,
            counts: QueryCounts::default(),
            rng,
            table,
            glauber_steps,
            weights: vec![0.0; k],
            scratch: vec![0; n],
            joint_cache: None,
        })
    }

    pub fn model(&self) -> &Arc<ModelSpec> {
        &self.model
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn counts(&self) -> QueryCounts {
        self.counts
    }

    fn require(&self, q: Query, op: &'static str) -> Result<()> {
        if self.mode.permits(q) {
            Ok(())
        } else {
            Err(Error::ModeUnsupported { mode: self.mode.to_string(), op })
        }
    }

    pub fn draw_general(&mut self) -> Result<Configuration> {
        let mut x = vec![0; self.model.n()];
        self.draw_general_into(&mut x)?;
        Ok(x.into())
    }

    pub fn draw_general_into(&mut self, out: &mut [usize]) -> Result<()> {
        self.require(Query::General, "general")?;
        if out.len() != self.model.n() {
            return Err(Error::DimensionMismatch { expected: self.model.n(), got: out.len() });
        }
        self.counts.general += 1;
        self.sample_full(out);
        Ok(())
    }

    fn sample_full(&mut self, out: &mut [usize]) {
        if let Backend::Glauber { .. } = self.backend {
            self.glauber(out);
            return;
        }
        if let Some(table) = &self.table {
            let u = self.rng.random::<f64>() * table.total();
            let idx = table.cumulative.partition_point(|&c| c <= u).min(table.masses.len() - 1);
            let k = self.model.k();
            let mut rest = idx;
            for slot in out.iter_mut().rev() {
                *slot = rest % k;
                rest /= k;
            }
            return;
        }
        let rng = &mut self.rng;
        let k = self.model.k();
        match self.model.variant() {
            Variant::Uniform => out.iter_mut().for_each(|s| *s = rng.random_range(0..k)),
            Variant::Product { coords } => {
                for (s, c) in out.iter_mut().zip(coords) {
                    *s = sample_weights(rng, c);
                }
            }
            Variant::SubcubeBad(spec) => spec.sample(rng, out),
            Variant::MatchedIsing(spec) => spec.sample(rng, out),
            Variant::ProductMixture { weights, components } => {
                let c = sample_weights(rng, weights);
                for (s, m) in out.iter_mut().zip(&components[c]) {
                    *s = sample_weights(rng, m);
                }
            }
            Variant::Ising(_) | Variant::ExplicitTable { .. } => unreachable!("table-backed"),
        }
    }

    fn glauber(&mut self, x: &mut [usize]) {
        let (n, k) = (self.model.n(), self.model.k());
        for s in x.iter_mut() {
            *s = self.rng.random_range(0..k);
        }
        for _ in 0..self.glauber_steps {
            let i = self.rng.random_range(0..n);
            self.model.coordinate_weights(i, x, &mut self.weights);
            x[i] = sample_weights(&mut self.rng, &self.weights);
        }
    }

    /// Coordinate query; `pin` must leave exactly `i` free.
    pub fn draw_coordinate(&mut self, i: usize, pin: &Pinning) -> Result<usize> {
        self.require(Query::Coordinate, "coordinate")?;
        let n = self.model.n();
        pin.validate(n, self.model.k())?;
        if i >= n || pin.is_pinned(i) || pin.pinned_count() + 1 != n {
            return Err(Error::DimensionMismatch { expected: n - 1, got: pin.pinned_count() });
        }
        let mut x = std::mem::take(&mut self.scratch);
        pin.write_into(&mut x);
        x[i] = 0;
        let a = self.coordinate_at(i, &x);
        self.scratch = x;
        Ok(a)
    }

    /// Coordinate query given a full configuration whose entry `i` is ignored.
    pub fn draw_coordinate_at(&mut self, i: usize, x: &[usize]) -> Result<usize> {
        self.require(Query::Coordinate, "coordinate")?;
        if x.len() != self.model.n() || i >= x.len() {
            return Err(Error::DimensionMismatch { expected: self.model.n(), got: x.len() });
        }
        Ok(self.coordinate_at(i, x))
    }

    #[inline]
    fn coordinate_at(&mut self, i: usize, x: &[usize]) -> usize {
        self.counts.coordinate += 1;
        if self.model.coordinate_weights(i, x, &mut self.weights) {
            sample_weights(&mut self.rng, &self.weights)
        } else {
            0
        }
    }

    /// Subcube query; returns the free coordinates in ascending order.
    pub fn draw_subcube(&mut self, pin: &Pinning) -> Result<Vec<usize>> {
        let mut x = vec![0; self.model.n()];
        self.draw_subcube_into(pin, &mut x)?;
        Ok(pin.free_coords().into_iter().map(|i| x[i]).collect())
    }

    /// Subcube query writing a full configuration: pinned entries copied from
    /// `pin`, free entries drawn (all zero when `pin` is infeasible).
    pub fn draw_subcube_into(&mut self, pin: &Pinning, x: &mut [usize]) -> Result<()> {
        self.require(Query::Subcube, "subcube")?;
        let (n, k) = (self.model.n(), self.model.k());
        pin.validate(n, k)?;
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.len() });
        }
        self.counts.subcube += 1;
        let pinned = pin.pinned_count();
        if pinned == 0 {
            self.sample_full(x);
            return Ok(());
        }
        x.fill(0);
        pin.write_into(x);
        if pinned == n {
            return Ok(());
        }
        if pinned + 1 == n {
            let i = (0..n).find(|&i| !pin.is_pinned(i)).expect("one free coordinate");
            if self.model.coordinate_weights(i, x, &mut self.weights) {
                x[i] = sample_weights(&mut self.rng, &self.weights);
            }
            return Ok(());
        }
        let model = Arc::clone(&self.model);
        let rng = &mut self.rng;
        match model.variant() {
            Variant::Uniform => {
                for i in pin.free_coords() {
                    x[i] = rng.random_range(0..k);
                }
            }
            Variant::Product { coords } => {
                let feasible = pin.as_slice().iter().enumerate().all(|(j, v)| v.is_none_or(|s| coords[j][s] > 0.0));
                if feasible {
                    for i in pin.free_coords() {
                        x[i] = sample_weights(rng, &coords[i]);
                    }
                }
            }
            Variant::SubcubeBad(spec) => {
                if let Ok(case) = spec.pinned_case(pin) {
                    spec.sample_conditional(case, pin, rng, x);
                }
            }
            Variant::MatchedIsing(spec) => spec.sample_conditional(pin, rng, x),
            Variant::ProductMixture { .. } | Variant::Ising(_) | Variant::ExplicitTable { .. } => {
                let hit = matches!(&self.joint_cache, Some((p, _)) if p == pin);
                if !hit {
                    let cumulative = match model.conditional_joint(pin) {
                        Ok(joint) => {
                            let mut acc = 0.0;
                            Some(joint.iter().map(|m| {
                                acc += m;
                                acc
                            }).collect::<Vec<f64>>())
                        }
                        Err(Error::ZeroProbabilityPinning) => None,
                        Err(e) => return Err(e),
                    };
                    self.joint_cache = Some((pin.clone(), cumulative));
                }
                if let Some((_, Some(cum))) = &self.joint_cache {
                    let u = self.rng.random::<f64>() * cum[cum.len() - 1];
                    let mut idx = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
                    for i in (0..n).rev().filter(|&i| !pin.is_pinned(i)) {
                        x[i] = idx % k;
                        idx /= k;
                    }
                }
            }
        }
        Ok(())
    }

    /// Returns `x` with probability `pi(x) / (pi(x) + pi(y))`, and `x` when
    /// both are zero.
    pub fn draw_pairwise(&mut self, x: &[usize], y: &[usize]) -> Result<Configuration> {
        self.require(Query::Pairwise, "pairwise")?;
        let (n, k) = (self.model.n(), self.model.k());
        validate_config(x, n, k)?;
        validate_config(y, n, k)?;
        self.counts.pairwise += 1;
        Ok(if self.pairwise_keeps_first(x, y) { x.to_vec() } else { y.to_vec() }.into())
    }

    fn pairwise_keeps_first(&mut self, x: &[usize], y: &[usize]) -> bool {
        let lx = self.model.log_weight_unchecked(x);
        let ly = self.model.log_weight_unchecked(y);
        if lx == f64::NEG_INFINITY {
            return ly == f64::NEG_INFINITY;
        }
        let p = 1.0 / (1.0 + (ly - lx).exp());
        self.rng.random::<f64>() < p
    }

    /// Barker chain on coordinate `i` driven by pairwise queries: each step
    /// proposes a uniform symbol and keeps it if the pairwise oracle picks it.
    /// Starts from a uniform symbol.
    pub fn simulate_coordinate_via_pairwise(&mut self, i: usize, pin: &Pinning, steps: usize) -> Result<usize> {
        self.require(Query::Pairwise, "pairwise")?;
        let (n, k) = (self.model.n(), self.model.k());
        if k > PAIRWISE_CHAIN_MAX_K {
            return Err(Error::InvalidRange(format!("k = {k} exceeds {PAIRWISE_CHAIN_MAX_K}")));
        }
        pin.validate(n, k)?;
        if i >= n || pin.is_pinned(i) || pin.pinned_count() + 1 != n {
            return Err(Error::DimensionMismatch { expected: n - 1, got: pin.pinned_count() });
        }
        let mut cur = vec![0; n];
        pin.write_into(&mut cur);
        cur[i] = self.rng.random_range(0..k);
        let mut prop = cur.clone();
        for _ in 0..steps {
            prop[i] = self.rng.random_range(0..k);
            self.counts.pairwise += 1;
            if self.pairwise_keeps_first(&prop, &cur) {
                cur[i] = prop[i];
            }
        }
        Ok(cur[i])
    }
}
