use rand::Rng;

use crate::error::{Error, Result};
use crate::oracles::sample_weights;

/// Pull-based source of symbols with an exact draw count.
pub trait SampleStream {
    fn draw(&mut self) -> Result<usize>;
    fn consumed(&self) -> u64;
}

impl<S: SampleStream + ?Sized> SampleStream for &mut S {
    fn draw(&mut self) -> Result<usize> {
        (**self).draw()
    }
    fn consumed(&self) -> u64 {
        (**self).consumed()
    }
}

/// I.i.d. draws from a fixed mass vector.
pub struct IidStream<R> {
    masses: Vec<f64>,
    rng: R,
    consumed: u64,
}

impl<R: Rng> IidStream<R> {
    pub fn new(masses: &[f64], rng: R) -> Self {
        Self { masses: masses.to_vec(), rng, consumed: 0 }
    }
}

impl<R: Rng> SampleStream for IidStream<R> {
    fn draw(&mut self) -> Result<usize> {
        self.consumed += 1;
        Ok(sample_weights(&mut self.rng, &self.masses))
    }
    fn consumed(&self) -> u64 {
        self.consumed
    }
}

/// Relabels another stream's symbols; `None` marks a symbol outside the
/// target's support.
pub struct MapStream<'a, S: ?Sized, F> {
    inner: &'a mut S,
    map: F,
}

impl<'a, S: SampleStream + ?Sized, F: FnMut(usize) -> Option<usize>> MapStream<'a, S, F> {
    pub fn new(inner: &'a mut S, map: F) -> Self {
        Self { inner, map }
    }
}

impl<S: SampleStream + ?Sized, F: FnMut(usize) -> Option<usize>> SampleStream for MapStream<'_, S, F> {
    fn draw(&mut self) -> Result<usize> {
        let s = self.inner.draw()?;
        (self.map)(s).ok_or(Error::UnsupportedSymbol { symbol: s })
    }
    fn consumed(&self) -> u64 {
        self.inner.consumed()
    }
}

/// A stream backed by a closure, counting calls.
pub struct FnStream<F> {
    f: F,
    consumed: u64,
}

impl<F: FnMut() -> Result<usize>> FnStream<F> {
    pub fn new(f: F) -> Self {
        Self { f, consumed: 0 }
    }
}

impl<F: FnMut() -> Result<usize>> SampleStream for FnStream<F> {
    fn draw(&mut self) -> Result<usize> {
        self.consumed += 1;
        (self.f)()
    }
    fn consumed(&self) -> u64 {
        self.consumed
    }
}
