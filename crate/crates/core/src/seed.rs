//! Seed derivation. Every random stream in the lab is a ChaCha8 generator
//! seeded by folding a root seed with a path of indices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `index` under `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Folds `derive_seed` over a path such as `(stream, instance, iteration)`.
pub fn derive_seed_path(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &i| derive_seed(s, i))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags used as the first element of seed paths.
pub mod stream {
    pub const GENERATE: u64 = 1;
    pub const ROLLOUT: u64 = 2;
    pub const COLLECT: u64 = 3;
    pub const TRAIN: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const SPLIT: u64 = 6;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_differ_and_repeat() {
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        assert_ne!(derive_seed(7, 3), derive_seed(7, 4));
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
        assert_eq!(
            derive_seed_path(7, &[1, 2]),
            derive_seed(derive_seed(7, 1), 2)
        );
    }
}
