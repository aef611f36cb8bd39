//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator keyed by a root
//! seed and a path of labels, so independent consumers never share state and
//! adding a consumer never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with a label path into a child seed.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &label| {
        splitmix64(acc ^ splitmix64(label.wrapping_add(0x5851_F42D_4C95_7F2D)))
    })
}

pub fn stream(seed: u64, path: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}

/// Stable stream labels.
pub mod label {
    pub const ENV: u64 = 1;
    pub const OBJECTS: u64 = 2;
    pub const FEATURES: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const INSTRUCTION: u64 = 5;
    pub const EPISODE: u64 = 6;
    pub const INIT: u64 = 7;
    pub const TRAIN: u64 = 8;
    pub const ROLLOUT: u64 = 9;
    pub const SPLIT: u64 = 10;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, &[1, 2]).random();
        let b: u64 = stream(7, &[1, 2]).random();
        let c: u64 = stream(7, &[2, 1]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive(7, &[]), derive(8, &[]));
    }
}
