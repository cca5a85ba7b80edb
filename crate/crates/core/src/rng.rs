//! Seeding scheme shared by every stochastic component.
//!
//! All samplers draw from ChaCha8 so that results are reproducible across
//! platforms and releases. Parallel workers are given independent streams of
//! the same master seed, so a result is a pure function of
//! `(seed, worker count)` and never of thread scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Root generator for a master seed.
pub fn master_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Independent generator for worker `stream` under the same master seed.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
