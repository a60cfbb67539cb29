//! Reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The pipeline's random stream; reproducible from a 64-bit seed.
pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Child stream for replication `rep` of a run seeded with `seed`.
pub fn replication_stream(seed: u64, rep: u64) -> Stream {
    stream(seed ^ rep)
}
