//! Seeded random number generation.
//!
//! Every run uses ChaCha8 seeded from a 64-bit seed. Independent consumers
//! inside a run (batch generation, training, evaluation, ...) draw from
//! distinct ChaCha streams of the same seed, so adding draws to one consumer
//! never shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name of the generator algorithm, recorded with every run.
pub const RNG_ALGORITHM: &str = "chacha8";

pub type Rng = ChaCha8Rng;

/// Well-known stream ids.
pub mod stream {
    pub const BATCH: u64 = 0;
    pub const TRAIN: u64 = 1;
    pub const INIT: u64 = 2;
    pub const ENV: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const ORACLE: u64 = 5;
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn seeded_stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
