//! Deterministic random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from the
//! run seed, so e.g. sampling the initial condition draws the same numbers
//! whether or not a score network is initialized afterwards.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent stream identifiers under one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Sampling = 1,
    NetworkInit = 2,
    Training = 3,
    Pretraining = 4,
}

/// Base stream for `seed`. Zero is an ordinary seed.
pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(seed: u64, stream: Stream) -> SimRng {
    let mut rng = seeded_rng(seed);
    rng.set_stream(stream as u64);
    rng
}
