//! Deterministic RNG stream derivation.
//!
//! Every stochastic operation in the crate draws from a stream derived from
//! the experiment seed plus a structural path (client id, round, epoch,
//! example index, ...). Streams are independent of execution order, so a
//! parallel run consumes exactly the same random numbers per unit of work as
//! a serial one.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 step; used only to mix path components into a stream key.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `seed` with a structural path into a single stream key.
pub fn stream_key(seed: u64, path: &[u64]) -> u64 {
    let mut k = splitmix64(seed);
    for &tag in path {
        k = splitmix64(k ^ splitmix64(tag));
    }
    k
}

/// RNG for the stream identified by (seed, path). Same inputs, same stream,
/// regardless of how many other streams were consumed before this one.
pub fn derived_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, path))
}
