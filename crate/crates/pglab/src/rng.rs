//! Deterministic seeding.
//!
//! Every stochastic routine in the crate takes either a [`Seed`] or an
//! explicit `ChaCha8Rng`. Seeds split into independent child streams via a
//! counter-based mix (splitmix64 finalizer), so parallel work items can be
//! seeded by index without sharing streams — the basis for the crate-wide
//! "same seed, same bytes" reproducibility guarantee.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer: a bijective avalanche mix on 64-bit integers.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A master seed that can be split into independent child streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub u64);

impl Seed {
    pub fn new(v: u64) -> Self {
        Seed(v)
    }

    /// Derive the `idx`-th child seed. Children of distinct indices, and
    /// children of distinct parents, yield distinct streams (up to the usual
    /// 64-bit collision caveats).
    pub fn child(self, idx: u64) -> Seed {
        Seed(mix(self.0 ^ mix(idx.wrapping_add(0x517c_c1b7_2722_0a95))))
    }

    /// Materialize the RNG for this seed.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
