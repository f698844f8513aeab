//! Deterministic seed derivation.
//!
//! Every source of randomness in the crate is a [`ChaCha8Rng`] seeded through
//! this module, so a run is a pure function of its configured seed no matter
//! how work is scheduled.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named sub-streams, so independent uses of the same run seed cannot collide.
pub mod stream {
    /// Minibatch shuffling; combined with the epoch index.
    pub const SHUFFLE: u64 = 1;
    /// Mixup partner/lambda draws.
    pub const MIXUP: u64 = 2;
    /// Phase-1 model of the two-phase k-NN smoothing pipeline.
    pub const KNN_PHASE1: u64 = 3;
    /// The anchor baseline's preliminary model.
    pub const ANCHOR_PRELIM: u64 = 4;
    /// Per-member seeds inside an ensemble or co-distilled pair.
    pub const MEMBER: u64 = 5;
    /// Per-trial seeds in rate experiments.
    pub const TRIAL: u64 = 6;
}

/// Mix `base` with a stream id into a fresh seed (splitmix64 finalizer).
///
/// Stable across platforms and releases; derived seeds for distinct streams
/// are effectively independent.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for a (base seed, stream) pair.
pub fn rng_for(base: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream))
}

/// FNV-1a over a string; used to offset sweep grid points by their
/// hyperparameters so per-point seeds do not depend on scheduling.
pub fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_deterministic_and_stream_separated() {
        assert_eq!(derive_seed(7, 1), derive_seed(7, 1));
        assert_ne!(derive_seed(7, 1), derive_seed(7, 2));
        assert_ne!(derive_seed(7, 1), derive_seed(8, 1));
    }

    #[test]
    fn stable_hash_differs_on_content() {
        assert_ne!(stable_hash("knn_ls(k=10)"), stable_hash("knn_ls(k=5)"));
        assert_eq!(stable_hash(""), 0xcbf2_9ce4_8422_2325);
    }
}
