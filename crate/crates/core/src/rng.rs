//! Reproducible random streams.
//!
//! Every simulation draws from a ChaCha8 generator keyed by a master seed and
//! positioned on its own 64-bit stream, so replication `i` of experiment
//! cell `k` sees the same numbers regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream identifier for replication `replication` of cell `cell`.
pub fn stream_id(cell: u32, replication: u32) -> u64 {
    (u64::from(cell) << 32) | u64::from(replication)
}

/// Generator for one `(master_seed, cell, replication)` triple.
pub fn replication_rng(master_seed: u64, cell: u32, replication: u32) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(cell, replication));
    rng
}

/// Generator for a single stand-alone run.
pub fn seeded_rng(seed: u64) -> SimRng {
    replication_rng(seed, 0, 0)
}
