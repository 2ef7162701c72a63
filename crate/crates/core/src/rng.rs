//! Seeded randomness.
//!
//! Every random draw comes from ChaCha20 (the `rand_chacha` 0.9 implementation, 20 rounds)
//! keyed by 32 bytes laid out as:
//!
//! | bytes  | content                                   |
//! |--------|-------------------------------------------|
//! | 0..8   | user seed, little endian                  |
//! | 8..16  | stream purpose tag, little endian         |
//! | 16..24 | counter (try, restart or sample index)    |
//! | 24..32 | ASCII `"EGRNG-v1"`                         |
//!
//! The generator's own word counter starts at zero. Changing this layout changes results,
//! so the version tag must move with it.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const VERSION_TAG: &[u8; 8] = b"EGRNG-v1";

/// Named purposes so independent consumers of the same seed never share a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Hash = 1,
    Source = 2,
    Bob = 3,
    Separation = 4,
    Team = 5,
    Test = 99,
}

pub fn stream(seed: u64, purpose: Stream, counter: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    key[16..24].copy_from_slice(&counter.to_le_bytes());
    key[24..32].copy_from_slice(VERSION_TAG);
    ChaCha20Rng::from_seed(key)
}
