//! Deterministic random streams. Every stochastic operation takes an explicit
//! `u64` seed; independent substreams are derived from `(seed, tag, index)` so
//! that results do not depend on thread count or evaluation order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 step; a solid small mixer for seed derivation.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A deterministic generator for substream `index` of purpose `tag` under a
/// root seed. Distinct `(seed, tag, index)` triples give independent streams.
pub fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ tag.rotate_left(17);
    let mut key = [0u8; 32];
    let a = splitmix64(&mut state);
    let mut state2 = a ^ index.rotate_left(31);
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state2).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
