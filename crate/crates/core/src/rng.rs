//! Seeded random streams.
//!
//! Every stochastic step draws from a ChaCha8 stream keyed by a user seed and
//! a small stream tag, so independent consumers (per-tree bootstraps, epoch
//! shuffles, initializers) never share state and stay reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Root stream for a seed.
pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Independent stream derived from `(seed, stream)`.
pub fn derived(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
