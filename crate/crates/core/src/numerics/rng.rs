//! Seeded, stream-addressed random number generation.
//!
//! Every stochastic operation draws from a ChaCha8 stream selected by the run
//! seed plus a path of stream ids (purpose, epoch, step, index, ...). Two
//! streams with different paths never share state, so work can be split across
//! threads without changing any draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream purposes. Kept as constants so that checkpoints and logs can be
/// replayed across versions.
pub mod purpose {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const VIEW_DROPOUT: u64 = 3;
    pub const MASKING: u64 = 4;
    pub const SEQ_DROPOUT: u64 = 5;
    pub const SYNTH: u64 = 6;
    pub const GRADCHECK: u64 = 7;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a path of ids into a single 64-bit stream id.
pub fn stream_id(path: &[u64]) -> u64 {
    path.iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &id| splitmix(acc ^ splitmix(id)))
}

/// Returns the generator for `path` under `seed`.
pub fn stream(seed: u64, path: &[u64]) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(path));
    rng
}
