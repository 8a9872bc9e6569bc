//! Seedable random streams.
//!
//! Every random draw comes from a ChaCha8 generator keyed by the run seed.
//! Independent streams are selected with the ChaCha stream word, so a stream
//! id derived from (outer iteration, inner round) or a trial index gives
//! reproducible, non-overlapping sequences regardless of thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for stream `stream` of the run keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Stream id for an inner round of an outer iteration.
pub fn round_stream(outer: u64, round: u64) -> u64 {
    (outer << 24) ^ round ^ 0x5EED_0000_0000_0000
}

/// Stream used for K++ seeding; disjoint from every round stream.
pub const INIT_STREAM: u64 = 0x1417_0000_0000_0000;
