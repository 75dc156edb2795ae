//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (the 8-round ChaCha
//! stream cipher used as a PRNG), keyed by a 64-bit seed expanded with
//! `seed_from_u64` and separated into independent streams by a 64-bit stream
//! id. ChaCha8's output is fully specified, so a given `(seed, stream)` pair
//! yields the same sequence on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids; the high 32 bits select the purpose, the low 32 bits an index
/// (epoch, layer, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Fill = 1,
    Init = 2,
    Split = 3,
    Batches = 4,
    Synthetic = 5,
    Probe = 6,
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) | (index & 0xffff_ffff));
    rng
}
