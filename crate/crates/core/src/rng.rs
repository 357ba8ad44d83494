//! Reproducible random substreams.
//!
//! Every stochastic stage draws from its own ChaCha stream keyed by the
//! configured seed plus a path of labels (run index, stage, ...), so results
//! do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a sequence of labels into a new 64-bit seed.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(seed), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

pub fn substream(seed: u64, labels: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, labels))
}

/// Stage labels used with [`substream`].
pub mod stage {
    pub const SOURCE_A: u64 = 1;
    pub const SOURCE_B: u64 = 2;
    pub const PREP_A: u64 = 3;
    pub const PREP_B: u64 = 4;
    pub const ROUTING: u64 = 5;
    pub const DETECTION: u64 = 6;
}
