//! Deterministic RNG streams.
//!
//! Every stochastic component draws from a ChaCha8 generator seeded with the
//! run seed and placed on its own stream, derived from a domain tag plus an
//! index (domain in the top 16 bits, index in the low 48). Parallel workers
//! never share a generator, so results are independent of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream namespaces, one per stochastic component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Data = 1,
    ModelInit = 2,
    Train = 3,
    Sample = 4,
    Embed = 5,
    Analysis = 6,
}

/// Generator for `(seed, domain, index)`, reproducible across runs and builds.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 48) | (index & 0x0000_FFFF_FFFF_FFFF));
    rng
}
