//! Reproducible standard-normal streams.
//!
//! Every `(seed, level, sample_index)` triple owns one ChaCha8 keystream: the
//! key is derived from `seed` (via `SeedableRng::seed_from_u64`) and the
//! 64-bit stream id is `level << 48 | sample_index`. Normals are drawn with the
//! ziggurat sampler of `rand_distr::StandardNormal`. Nothing depends on thread
//! count or scheduling, so results are identical across worker counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SAMPLE_BITS: u32 = 48;

/// A deterministic source of independent `N(0, 1)` variates.
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn next(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.rng.sample(StandardNormal);
        }
    }

    pub fn take(&mut self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        self.fill(&mut v);
        v
    }
}

/// Opens the stream for sample `sample_index` on `level` under `seed`.
///
/// Panics if `sample_index >= 2^48` or `level >= 2^16`.
pub fn rng_stream(seed: u64, level: u32, sample_index: u64) -> NormalStream {
    assert!(sample_index < 1 << SAMPLE_BITS, "sample index out of range");
    assert!(level < 1 << (64 - SAMPLE_BITS), "level out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((level as u64) << SAMPLE_BITS) | sample_index);
    rng.set_word_pos(0);
    NormalStream { rng }
}
