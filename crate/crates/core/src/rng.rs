//! Seeded random streams.
//!
//! Every random draw in the toolkit comes from a [`SimRng`] derived from a
//! master seed. Independent work items (Monte Carlo trials, sampling chunks)
//! each get their own ChaCha stream, so results do not depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Stream `index` of the generator keyed by `seed`.
pub fn substream(seed: u64, index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
