//! Seeded random streams.
//!
//! Every rollout draws from its own ChaCha stream derived from a base seed and a
//! rollout coordinate, so a run with `p` rollouts is an exact prefix of a run with
//! more rollouts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `(a, b)` under `seed`.
pub fn stream(seed: u64, a: u64, b: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, mix(a, b)));
    rng.set_stream(mix(a.wrapping_add(0x9e37), b));
    rng
}

/// SplitMix64-style mixing of two words.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(b.rotate_left(29))
        .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit FNV-1a hash of a string, used to key per-code streams.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}
