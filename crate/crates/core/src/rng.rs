//! Counter-based random streams.
//!
//! A stream is addressed by `(seed, domain, index)`. Each address maps to an
//! independent ChaCha8 stream, so work split into fixed chunks reproduces the
//! serial sequence regardless of how chunks are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keep streams for different purposes disjoint.
#[derive(Debug, Clone, Copy)]
pub enum Domain {
    Quadrature = 1,
    Transmission = 2,
    Record = 3,
}

/// Samples drawn per stream before moving on to the next stream index.
pub const CHUNK: usize = 1 << 14;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(domain as u64)));
    rng.set_stream(index);
    rng
}

/// Derives a child seed, used when one stochastic job fans out into sub-jobs.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xd134_2543_de82_ef95))
}
