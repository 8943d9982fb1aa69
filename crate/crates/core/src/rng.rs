//! Seeded random streams.
//!
//! Every random draw in the pipeline comes from ChaCha8 keyed by
//! `(seed, purpose)` with the ChaCha stream id set to a caller-chosen key
//! (usually a cell id). A cell's draws therefore do not depend on which other
//! cells exist or in what order they are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    GridSelection = 1,
    GridSplit = 2,
    SynthNoise = 3,
    SynthLatent = 4,
    LabelShuffle = 5,
    SynthOffset = 6,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn stream(seed: u64, purpose: Purpose, key: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(purpose as u64)));
    rng.set_stream(key);
    rng
}
