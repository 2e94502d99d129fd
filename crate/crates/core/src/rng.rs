//! Counter-based random streams.
//!
//! Sample `j` of an experiment seeded with `seed` always reads from the ChaCha8
//! stream keyed by `(seed, j)`, so results never depend on how samples are
//! distributed over workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Independent stream for sample `index` under master seed `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finalizer, used to derive sub-experiment seeds from a master seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw on the open interval (0, 1) built from the top 52 bits.
#[inline]
pub fn open_unit(raw: u64) -> f64 {
    ((raw >> 12) as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
}
