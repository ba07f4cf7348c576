//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use condtest_core::{Backend, ModelSpec, OracleHandle, OracleMode, SubcubeBadSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn oracle(model: ModelSpec, mode: OracleMode, backend: Backend, seed: u64) -> OracleHandle {
    OracleHandle::new(Arc::new(model), mode, backend, rng(seed)).expect("valid oracle")
}

/// A SubcubeBad member with `|A| = t`, drawn from `seed`.
pub fn subcube_bad(n: usize, t: usize, seed: u64) -> ModelSpec {
    ModelSpec::subcube_bad(SubcubeBadSpec::random(n, t, &mut rng(seed)).expect("valid spec"))
}
