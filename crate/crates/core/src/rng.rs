//! Seeded random streams.
//!
//! Every stochastic component (initialisation, exploration, replay sampling,
//! environment dynamics, evaluation) draws from its own ChaCha stream derived
//! from the run seed, so changing how often one component draws never shifts
//! the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod streams {
    pub const INIT: u64 = 1;
    pub const ENV: u64 = 2;
    pub const EXPLORE: u64 = 3;
    pub const REPLAY: u64 = 4;
    pub const EVAL_ENV: u64 = 5;
    pub const EVAL_ACT: u64 = 6;
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A fresh 64-bit seed for a component that takes a plain seed.
pub fn derive(seed: u64, stream_id: u64) -> u64 {
    use rand::RngCore;
    stream(seed, stream_id).next_u64()
}
