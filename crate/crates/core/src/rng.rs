//! Counter-based random-number streams.
//!
//! Every consumer of randomness receives a `ChaCha12Rng` addressed by a
//! `(seed, stream)` pair. Replication `r` of a Monte Carlo experiment derives
//! its seed from `(master_seed, r)` with a splitmix64 mix, so serial and
//! parallel runs consume identical variates regardless of scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream id used for path simulation.
pub const PATH_STREAM: u64 = 0;
/// Stream id used for observation noise.
pub const NOISE_STREAM: u64 = 1;

/// RNG for a given `(seed, stream)` address.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-replication seed derived from `(master, index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}
