//! Reproducible random streams.
//!
//! Every random draw comes from a ChaCha generator keyed by
//! `(seed, replicate)` and positioned on a named stream, so replicates can
//! run in any order or in parallel and still produce identical data.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Design = 1,
    RandomEffects = 2,
    Noise = 3,
    CrossValidation = 4,
}

pub fn stream_rng(seed: u64, replicate: u64, stream: Stream) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replicate.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream as u64);
    rng
}
