//! Deterministic seed derivation.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] seeded through
//! [`derive_seed`], so a run is fully determined by the master seed plus a
//! stable tag path (stage, patient, margin, point, band). Entities can then
//! be generated in any order, or in parallel, without changing the output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche, stable across platforms.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `base` and an ordered tag path.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut h = mix(base);
    for &t in tags {
        h = mix(h ^ t);
    }
    h
}

/// A seeded RNG for the given seed path.
pub fn rng_for(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// Stage tags used when splitting the master seed.
pub mod stage {
    pub const SYNTH: u64 = 0x01;
    pub const CORRUPT: u64 = 0x02;
    pub const CONFOUND: u64 = 0x03;
    pub const TRAIN: u64 = 0x04;
    pub const REFINE: u64 = 0x05;
    pub const ATTRIB: u64 = 0x06;
    pub const RESCORE: u64 = 0x07;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_deterministic_and_tag_sensitive() {
        assert_eq!(derive_seed(7, &[1, 2, 3]), derive_seed(7, &[1, 2, 3]));
        assert_ne!(derive_seed(7, &[1, 2, 3]), derive_seed(7, &[1, 3, 2]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
    }

    #[test]
    fn rng_streams_differ_between_entities() {
        use rand::RngCore;
        let mut a = rng_for(42, &[stage::SYNTH, 0, 1]);
        let mut b = rng_for(42, &[stage::SYNTH, 0, 2]);
        assert_ne!(a.next_u64(), b.next_u64());
    }
}
