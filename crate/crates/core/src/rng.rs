//! Seeded random streams.
//!
//! Every consumer draws from `ChaCha8Rng` seeded with the run seed and a
//! stream id built from a purpose tag and an index, so data generation,
//! optimizer starts, MCMC chains and oracle chunks never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Data = 1,
    Starts = 2,
    Mcmc = 3,
    Oracle = 4,
}

pub fn stream_rng(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) ^ index);
    rng
}
