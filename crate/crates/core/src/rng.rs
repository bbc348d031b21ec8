//! Named random sub-streams derived from a single run seed.
//!
//! Every consumer of randomness inside a run draws from its own ChaCha stream
//! keyed by `(seed, stream, index)`, so replaying one consumer never perturbs
//! another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Consumers of randomness inside an optimization run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Stream {
    MleRestarts = 1,
    Acquisition = 2,
    Selection = 3,
    Split = 4,
    Gpi = 5,
    Bootstrap = 6,
    Sampling = 7,
}

/// Returns the generator for `stream` at position `index` (usually the
/// outer iteration) of the run seeded with `seed`.
pub fn substream(seed: u64, stream: Stream, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 40) ^ index);
    rng
}

/// A fresh generator from a plain seed.
pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
