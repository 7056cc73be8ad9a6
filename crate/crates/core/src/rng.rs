//! Counter-based randomness.
//!
//! Every consumer derives its own stream from a `(seed, stream)` pair, so the
//! value of the n-th draw never depends on what other consumers did before.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A `(seed, stream)` key for a reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Derives an independent child stream identified by `label`.
    pub fn substream(&self, label: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(label.wrapping_add(0x5851_f42d_4c95_7f2d))),
        }
    }

    /// Generator positioned at the first draw of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Generator positioned at draw `index` (each draw is one `u64`).
    pub fn rng_at(&self, index: u64) -> ChaCha8Rng {
        let mut rng = self.rng();
        rng.set_word_pos(u128::from(index) * 2);
        rng
    }

    /// The `index`-th uniform draw in `[0, 1)`.
    pub fn uniform_at(&self, index: u64) -> f64 {
        unit_f64(self.rng_at(index).next_u64())
    }
}

/// Maps a raw 64-bit draw to `[0, 1)` with 53 bits of resolution.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `[0, 1)` from any generator.
#[inline]
pub fn next_unit(rng: &mut impl RngCore) -> f64 {
    unit_f64(rng.next_u64())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
