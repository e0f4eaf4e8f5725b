//! Seeded random streams. Every consumer derives its generator from the master
//! seed and a fixed stream id, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids. Per-fold streams add the fold index to the base id.
pub mod streams {
    pub const FOLDS: u64 = 1;
    pub const KMEANS: u64 = 2;
    pub const INIT_NET: u64 = 1 << 16;
    pub const FIT: u64 = 2 << 16;
    pub const OPTIMIZE: u64 = 3 << 16;
    pub const INIT_KMEANS: u64 = 4 << 16;
    pub const GENERATE: u64 = 1 << 32;
}

/// Generator for stream `stream` of master seed `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A 64-bit seed drawn from stream `stream`, for APIs that take a plain seed.
pub fn derived_seed(seed: u64, stream_id: u64) -> u64 {
    use rand::Rng;
    stream(seed, stream_id).random()
}
