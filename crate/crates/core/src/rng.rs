//! Counter-based seed derivation.
//!
//! Every random stream in a run is keyed by a tuple of integers (run seed,
//! step, prompt, sample index, ...) so results never depend on call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifier of the stream construction, stored in checkpoints.
pub const PRNG_ALGORITHM: &str = "chacha8+splitmix64/v1";

/// Domain tags keep streams for different purposes disjoint.
pub mod domain {
    pub const PREFERENCE: u64 = 0x5052_4546;
    pub const GENERATION: u64 = 0x4745_4e45;
    pub const NOISING: u64 = 0x4e4f_4953;
    pub const PRETRAIN: u64 = 0x5052_4554;
    pub const INIT: u64 = 0x494e_4954;
    pub const EVAL: u64 = 0x4556_414c;
    pub const SERVE: u64 = 0x5345_5256;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `base` with SplitMix64.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}
