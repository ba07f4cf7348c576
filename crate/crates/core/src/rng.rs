//! Seeding. Every trial owns two ChaCha8 streams derived from `seed + trial`:
//! stream 0 drives the oracle, stream 1 the algorithm's own coin flips.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    seed.wrapping_add(trial)
}

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `(oracle, algorithm)` generators for one trial.
pub fn trial_rngs(seed: u64, trial: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let s = trial_seed(seed, trial);
    (stream(s, 0), stream(s, 1))
}
