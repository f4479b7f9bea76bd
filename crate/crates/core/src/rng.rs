//! Seeded random streams.
//!
//! Every stochastic step draws from a [`ChaCha8Rng`] whose seed is derived
//! from a parent seed and a tuple of tags. Derivation is a pure function, so
//! the order in which trials execute never changes what they draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream used throughout the crate.
pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes `parent` together with `tags` into a child seed.
pub fn derive_seed(parent: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(parent);
    for (i, &tag) in tags.iter().enumerate() {
        h = splitmix64(h ^ splitmix64(tag.wrapping_add((i as u64 + 1).wrapping_mul(GOLDEN))));
    }
    h
}

/// Stable 64-bit tag for a string label (FNV-1a).
pub fn tag(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

pub fn stream(parent: u64, tags: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(parent, tags))
}
