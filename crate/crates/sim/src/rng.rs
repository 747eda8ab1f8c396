//! Keyed random streams.
//!
//! Every task draws from its own ChaCha20 generator seeded with
//! `seed ^ key_hash(key)`. ChaCha20 is a counter-based stream cipher with a
//! fixed, platform-independent output sequence, so a task's draws depend only
//! on the run seed and the task key, never on which thread ran it.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Domain tags that keep the per-task key spaces apart.
pub mod tag {
    pub const LOW_RANK: u64 = 1;
    pub const PERTURBATION: u64 = 2;
    pub const FACTOR_PANEL: u64 = 3;
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a key tuple. Fixed across platforms and releases,
/// unlike `std::hash`.
pub fn key_hash(key: &[u64]) -> u64 {
    key.iter().fold(0x9e37_79b9_7f4a_7c15, |h, &k| mix(h ^ mix(k.wrapping_add(0x9e37_79b9_7f4a_7c15))))
}

pub fn derive_seed(seed: u64, key: &[u64]) -> u64 {
    seed ^ key_hash(key)
}

pub fn stream(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn keyed_stream(seed: u64, key: &[u64]) -> ChaCha20Rng {
    stream(derive_seed(seed, key))
}
