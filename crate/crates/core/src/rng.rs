//! Reproducible random streams.
//!
//! Every independent realisation gets its own ChaCha8 stream keyed by
//! `(base_seed, index)`. Streams never overlap, so ensemble output depends
//! only on the seeds and never on how runs are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// The `index`-th stream under `base_seed`.
pub fn stream(base_seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

/// Derives a new base seed for a labelled sub-experiment (splitmix64 finaliser).
pub fn derive_seed(base_seed: u64, label: u64) -> u64 {
    let mut z = base_seed ^ label.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
