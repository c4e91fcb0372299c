//! Seed derivation. Every random stream in the pipeline is a ChaCha8 generator
//! keyed by a 64-bit seed derived from a parent seed and a purpose tag, so a
//! single experiment seed fixes every downstream draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `(parent, tag, index)`.
pub fn derive(parent: u64, tag: &str, index: u64) -> u64 {
    let mut h = mix(parent);
    for b in tag.bytes() {
        h = mix(h ^ u64::from(b));
    }
    mix(h ^ mix(index))
}
