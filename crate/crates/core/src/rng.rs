//! Seed derivation for reproducible parallel work.
//!
//! Every random stream in the crate is a `ChaCha8Rng` keyed by a 64-bit seed
//! obtained from a parent seed, a purpose tag and an index:
//!
//! ```text
//! child = splitmix64(splitmix64(parent ^ tag) ^ index)
//! ```
//!
//! where `splitmix64` is the finalizer of Steele, Lea & Flood's SplitMix64
//! (`x += 0x9E3779B97F4A7C15`, then two xor-shift-multiply rounds). The
//! rounds are a bijection on `u64`, so distinct `(parent, tag, index)`
//! triples map to well-spread seeds. Because a job's stream depends only on
//! its own triple, results do not depend on thread count or scheduling.
//! The constants below are part of the on-disk reproducibility contract and
//! must never change.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keeping independent streams apart.
pub mod tag {
    pub const PARTITION: u64 = 0x5041_5254;
    pub const FOREST: u64 = 0x464f_5253;
    pub const TREE: u64 = 0x5452_4545;
    pub const PERMUTATION: u64 = 0x5045_524d;
    pub const REPETITION: u64 = 0x5245_5045;
    pub const STRATUM: u64 = 0x5354_5241;
    pub const SELECTION: u64 = 0x5345_4c45;
    pub const SCENARIO: u64 = 0x5343_454e;
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives the seed of child stream `index` for purpose `tag`.
pub fn derive_seed(parent: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ tag) ^ index)
}

/// A ChaCha8 stream seeded from `seed`.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shorthand for `stream(derive_seed(parent, tag, index))`.
pub fn child_stream(parent: u64, tag: u64, index: u64) -> ChaCha8Rng {
    stream(derive_seed(parent, tag, index))
}
