//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream keyed by
//! `(seed, stream)`, so data splits, weight init and shuffling never share
//! a sequence and can be produced in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids for dataset generation. The split index is added to the base.
pub(crate) const DATA_SAMPLES: u64 = 0x100;
pub(crate) const DATA_NOISE: u64 = 0x200;
pub(crate) const DATA_PILOT: u64 = 0x300;
/// Stream ids for training.
pub(crate) const TRAIN_INIT: u64 = 0x1000;
pub(crate) const TRAIN_SHUFFLE: u64 = 0x1001;
pub(crate) const MONTE_CARLO: u64 = 0x2000;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
