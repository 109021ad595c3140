//! Seeded, splittable randomness. Every random draw in the library comes
//! from a ChaCha stream derived from the single user seed, so runs are
//! reproducible bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_SEED: u64 = 42;

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Stream identifiers, one per consumer.
pub(crate) const STREAM_SEEDS: u64 = 1;
pub(crate) const STREAM_FRAMES: u64 = 2;
pub(crate) const STREAM_DICTIONARY: u64 = 3;
pub(crate) const STREAM_SYNTH: u64 = 4;
pub(crate) const STREAM_NOISE: u64 = 5;
pub(crate) const STREAM_PATTERN: u64 = 6;
pub(crate) const STREAM_RESEED: u64 = 7;
