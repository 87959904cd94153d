//! Seed derivation, so that independent consumers of randomness never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of tags into a new seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stable tags for the randomness consumers in the pipeline.
pub mod tag {
    pub const MODEL_INIT: u64 = 1;
    pub const HEAD_INIT: u64 = 2;
    pub const PK_BATCH: u64 = 3;
    pub const ICM_SAMPLE: u64 = 4;
    pub const PBH_SPLIT: u64 = 5;
}
