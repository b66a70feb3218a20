//! Seeded random streams.
//!
//! Each consumer of randomness (initialisation, sampling, twin construction, ...) draws
//! from its own ChaCha stream derived from the run seed, so changing how many numbers
//! one consumer draws never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Sampling = 2,
    Twin = 3,
    Split = 4,
    Synthetic = 5,
    Probe = 6,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
