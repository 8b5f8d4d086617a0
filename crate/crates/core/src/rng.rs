//! Seeded randomness with deterministic sub-streams.
//!
//! Every stochastic operation in the crate takes a [`SimRng`]. Independent
//! consumers (episodes, environment vs. agent, evaluation rollouts) get their
//! own stream via [`substream`], so results are a pure function of the seed
//! and do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags used across the crate.
pub mod purpose {
    pub const ENVIRONMENT: u64 = 0x01;
    pub const AGENT: u64 = 0x02;
    pub const GROUND_TRUTH: u64 = 0x03;
    pub const INITIAL_OBSERVATION: u64 = 0x04;
    pub const PLANNER_INIT: u64 = 0x05;
    pub const EVALUATION: u64 = 0x06;
    pub const BOOTSTRAP: u64 = 0x07;
    pub const RECOVERY: u64 = 0x08;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a seed with a path of tags into a new 64-bit seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

pub fn substream(seed: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, tags))
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: u64 = substream(7, &[1, 2]).random();
        let b: u64 = substream(7, &[1, 2]).random();
        let c: u64 = substream(7, &[2, 1]).random();
        let d: u64 = substream(8, &[1, 2]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
