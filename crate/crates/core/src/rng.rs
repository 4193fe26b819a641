//! Deterministic RNG streams keyed by a base seed and a coordinate path.
//!
//! Every parallel task derives its own generator from `(seed, coords…)`, so
//! results never depend on scheduling order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for the task at `coords` under `seed`.
pub fn stream(seed: u64, coords: &[u64]) -> StreamRng {
    let mut state = splitmix64(seed);
    for (depth, &c) in coords.iter().enumerate() {
        state = splitmix64(state ^ splitmix64(c.wrapping_add((depth as u64 + 1).wrapping_mul(GOLDEN))));
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// A derived `u64` seed, for handing to sub-components that take plain seeds.
pub fn derive_seed(seed: u64, coords: &[u64]) -> u64 {
    use rand::RngCore;
    stream(seed, coords).next_u64()
}
