//! Seed splitting. Every consumer of randomness owns a ChaCha stream
//! identified by `(seed, stream)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids used by the training loop.
pub mod streams {
    pub const CRITIC_INIT: u64 = 1;
    pub const GENERATOR_INIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const HOLDOUT: u64 = 4;
    pub const PROBE: u64 = 5;
    pub const FAKE_HOLDOUT: u64 = 6;
}
