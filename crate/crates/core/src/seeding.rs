//! Master-seed fan-out.
//!
//! One `u64` master seed drives a run. Each consumer gets its own ChaCha8
//! stream: the generator is seeded with the master seed and switched to a
//! fixed stream id per [`Stream`], optionally offset by a sub-index (model
//! index in an ensemble, scoring-pass index, ...). Streams never overlap, so
//! changing how many draws one consumer makes does not shift any other.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Batch = 2,
    TrainNoise = 3,
    ScoreNoise = 4,
    DpNoise = 5,
    Synthetic = 6,
    Split = 7,
}

/// Generator for `(master, stream, sub)`.
pub fn rng_for(master: u64, stream: Stream, sub: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((stream as u64) << 48) | (sub & 0xFFFF_FFFF_FFFF));
    rng
}
