//! Seeded random streams.
//!
//! Every rank draws from ChaCha8 streams keyed by `global_seed ^ rank`, one
//! stream per purpose, so walks and negative draws never share state and a run
//! replays exactly for a fixed seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Rank, VertexId};

pub const WALK_STREAM: u64 = 0;
pub const NEGATIVE_STREAM: u64 = 1;
pub const INIT_STREAM: u64 = 2;
pub const SCHEDULE_STREAM: u64 = 3;
pub const EVAL_STREAM: u64 = 4;

pub fn rank_stream(seed: u64, rank: Rank, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ rank as u64);
    rng.set_stream(stream);
    rng
}

/// Generator positioned at the first word belonging to `vertex` when each
/// vertex consumes `words_per_vertex` 32-bit words. Independent of partitioning.
pub fn vertex_stream(seed: u64, vertex: VertexId, words_per_vertex: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    rng.set_word_pos(vertex as u128 * words_per_vertex as u128);
    rng
}
