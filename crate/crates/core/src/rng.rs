//! Deterministic random streams keyed by `(seed, stream)`.
//!
//! Stream `k` of a seed is independent of every other stream, so trials can
//! run in any order or thread and still produce identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
