//! Seed derivation. Every random stream in a simulation is a ChaCha8
//! generator seeded from `(master seed, trial index, stream tag)` through a
//! SplitMix64 mixing chain, so a trial's randomness does not depend on which
//! worker runs it or on how many other trials ran before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Named streams. Detector streams are kept separate so that variants of the
/// same sampler consume identical walk and acceptance randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Channel = 1,
    Symbols = 2,
    Noise = 3,
    Detector = 4,
    InitialSample = 16,
    Batch = 17,
    Walk = 18,
    Accept = 19,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed for `(master, index, stream)`.
pub fn derive_seed(master: u64, index: u64, stream: Stream) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ index);
    splitmix64(b ^ (stream as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn stream_rng(master: u64, index: u64, stream: Stream) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, index, stream))
}
