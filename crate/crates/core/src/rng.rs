//! Keyed random streams.
//!
//! Every random quantity in a run is drawn from a stream addressed by
//! `(seed, purpose, index...)`. Streams never share state, so the value of a
//! draw does not depend on how work is scheduled across threads.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    TieBreak = 1,
    SignalSample = 2,
    Preferences = 3,
    Capacities = 4,
    Stats = 5,
    Replication = 6,
}

/// Build a ChaCha stream for `(seed, purpose, a, b)`.
pub fn stream(seed: u64, purpose: Purpose, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let words = [
        mix64(seed ^ 0x5851_F42D_4C95_7F2D),
        mix64((purpose as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ seed),
        mix64(a ^ 0xD1B5_4A32_D192_ED03),
        mix64(b.wrapping_add(0x8CB9_2BA7_2F3D_8DD7) ^ mix64(a)),
    ];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Derive a child seed, e.g. one per replication.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    mix64(seed ^ mix64(label.wrapping_add(0x94D0_49BB_1331_11EB)))
}

/// A uniformly random permutation of `0..n`.
pub fn permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
