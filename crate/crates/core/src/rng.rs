//! Counter-based seeding: every random draw in the crate is keyed by a tuple
//! of integers (seed, item index, sub-index, ...), so results never depend
//! on iteration order or worker scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a key tuple into a single 64-bit stream id.
pub fn key(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x5851_F42D_4C95_7F2D, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Fresh generator for the given key tuple.
pub fn keyed(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(key(parts))
}

/// Domain tags so unrelated consumers of the same user seed get
/// independent streams.
pub mod stream {
    pub const NOISE: u64 = 1;
    pub const CROP: u64 = 2;
    pub const MIX: u64 = 3;
    pub const INIT: u64 = 4;
    pub const BATCH: u64 = 5;
    pub const TOY_SCENE: u64 = 6;
    pub const TOY_NOISE: u64 = 7;
    pub const EVAL: u64 = 8;
    pub const FEATURES: u64 = 9;
}
