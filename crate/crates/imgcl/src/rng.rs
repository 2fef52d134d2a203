//! Seeded random streams.
//!
//! Every random draw in the crate flows from one 64-bit experiment seed
//! through named substreams, so changing how one component consumes
//! randomness never perturbs another component's draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the stream name, folded with the index.
fn stream_id(name: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ index.wrapping_mul(0x9e3779b97f4a7c15)
}

/// A reproducible generator for substream `name[index]` of `seed`.
pub fn substream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name, index));
    rng
}
