//! Deterministic seed derivation.
//!
//! Trial seeds must be a pure function of (master seed, trial index) so that
//! parallel execution order cannot change what each trial samples or trains.
//! Rust's `DefaultHasher` is not stable across releases, so the mixing is
//! spelled out here (splitmix64 finalizer).

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent sub-streams derived from one (master seed, index) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Block-config sampling for a trial.
    Sample,
    /// Weight init, shuffling, augmentation, and stochastic combiners.
    Train,
    /// Validation-split selection for a dataset.
    Split,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Sample => 1,
            Stream::Train => 2,
            Stream::Split => 3,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit seed for one (master, index, stream) triple.
pub fn derive_seed(master: u64, index: u64, stream: Stream) -> u64 {
    let a = splitmix64(master ^ splitmix64(index));
    splitmix64(a ^ stream.tag().wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Deterministic generator for one (master, index, stream) triple.
pub fn rng_for(master: u64, index: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, index, stream))
}
