//! Seeded random streams.
//!
//! Every parallel unit of work draws from its own ChaCha stream derived from
//! the run seed, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SynthRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SynthRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn stream(seed: u64, stream: u64) -> SynthRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a parent seed and a label; used to give sweep
/// cells and replicates reproducible, well-separated seeds.
pub fn derive_seed(seed: u64, label: &[u64]) -> u64 {
    // splitmix64 over the label words
    let mut z = seed;
    for &w in label {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15 ^ w.wrapping_mul(0xBF58_476D_1CE4_E5B9));
        let mut x = z;
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z = x ^ (x >> 31);
    }
    z
}
