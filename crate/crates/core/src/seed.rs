//! Seed derivation. Every random stream is derived from one global seed and
//! a stage name, so adding a stage never perturbs another stage's stream.

use rand::SeedableRng;

/// The generator used everywhere in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// 64-bit FNV-1a of a stage name.
pub fn stage_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn derive_seed(global: u64, stage: &str) -> u64 {
    splitmix64(global ^ splitmix64(stage_hash(stage)))
}

/// Seed for the `index`-th member of a stage (restart number, anchor block, ...).
pub fn derive_indexed(global: u64, stage: &str, index: u64) -> u64 {
    splitmix64(derive_seed(global, stage) ^ splitmix64(index.wrapping_add(1)))
}

pub fn rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}
