//! Hierarchical random-stream derivation.
//!
//! Every random draw in a run comes from a ChaCha8 stream whose 256-bit key is
//! a hash of `(base_seed, path...)`. A path is a short list of integers such as
//! `[scenario, iteration, tag("train-sample")]`, so streams for different
//! cells never overlap and adding or removing a cell leaves every other cell's
//! draws untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit identifier for a textual stage tag (FNV-1a, then mixed).
pub fn tag(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix(h)
}

/// Stream keyed by `base_seed` and a derivation path.
pub fn stream(base_seed: u64, path: &[u64]) -> SimRng {
    let mut state = splitmix(base_seed);
    for (depth, &part) in path.iter().enumerate() {
        state = splitmix(state ^ splitmix(part.wrapping_add(depth as u64 + 1)));
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        state = splitmix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    SimRng::from_seed(seed)
}

/// Plain seeded stream for single-stage tools (CLI debugging, ingestion splits).
pub fn seeded(seed: u64) -> SimRng {
    stream(seed, &[])
}
