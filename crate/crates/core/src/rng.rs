//! Keyed pseudorandom substreams.
//!
//! Every random draw in a run comes from a stream keyed by
//! (master seed, purpose, indices), so results do not depend on evaluation
//! order or on which other methods run alongside.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a stream from a master seed, a purpose tag, and any number of indices.
pub fn substream(master_seed: u64, purpose: &str, indices: &[u64]) -> Stream {
    let mut h = splitmix64(master_seed);
    for b in purpose.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x5851_f42d_4c95_7f2d)));
    }
    ChaCha8Rng::seed_from_u64(h)
}
