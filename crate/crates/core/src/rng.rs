//! Seeded random streams.
//!
//! Every randomized routine takes a `&mut impl Rng`. Parallel work derives one
//! independent ChaCha stream per index from a root seed so results do not
//! depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Root generator for `seed`.
pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
