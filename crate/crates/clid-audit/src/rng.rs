//! Deterministic seed derivation and RNG construction.
//!
//! Every random choice in the crate flows through a `ChaCha12Rng` seeded
//! from a value derived here, so runs are reproducible bit-for-bit across
//! platforms and independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 step, used as a stable seed mixer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a named sub-seed from a base seed. Distinct labels give
/// independent streams for the world, split, training, and scoring stages.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut state = splitmix64(base ^ 0xc1d0_a0d1_7000_0000);
    for &b in label.as_bytes() {
        state = splitmix64(state ^ u64::from(b));
    }
    state
}

/// Derive a per-index sub-seed, e.g. one noise stream per audited point.
pub fn derive_indexed_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_add(0x1234_5678_9abc_def0)))
}

/// Build the crate's standard RNG from a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(42, "world"), derive_seed(42, "world"));
        assert_ne!(derive_seed(42, "world"), derive_seed(42, "split"));
        assert_ne!(derive_seed(42, "world"), derive_seed(43, "world"));
        assert_ne!(derive_indexed_seed(7, 0), derive_indexed_seed(7, 1));
    }

    #[test]
    fn rng_streams_reproduce() {
        use rand::RngCore;
        let mut a = rng_from_seed(9);
        let mut b = rng_from_seed(9);
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
