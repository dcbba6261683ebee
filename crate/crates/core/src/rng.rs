//! Seeded random streams.
//!
//! Every random quantity in a run is drawn from a ChaCha stream identified by
//! `(seed, stream id)`, so adding draws to one stream never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RngStream = ChaCha8Rng;

/// Stream ids used by the alignment simulator.
pub mod streams {
    pub const REWARDS: u64 = 0;
    pub const TRAINING: u64 = 1;
    pub const EVALUATION: u64 = 2;
    /// Concentrability perturbations use `CONCENTRABILITY + t` for iteration `t`.
    pub const CONCENTRABILITY: u64 = 1_000;
    /// High bit set on the pair keys of annotator panels.
    pub const PANEL: u64 = 1 << 63;
}

pub fn stream(seed: u64, stream_id: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
