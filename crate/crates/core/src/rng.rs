//! Counter-based Gaussian noise.
//!
//! Every draw is addressed by `(seed, step)`: the seed fixes a ChaCha8 key and the step index
//! selects the stream, so the increment used at step `n` of a path never depends on how many
//! numbers were drawn before it or on which thread produced it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of path `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(0x6A09_E667_F3BC_C909)))
}

/// Standard normal draws keyed on `(seed, step)`.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    key: [u8; 32],
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: ChaCha8Rng::seed_from_u64(seed).get_seed(),
        }
    }

    /// Fills `out` with the standard normals of counter `step`.
    pub fn fill_normals(&self, step: u64, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(step);
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }
}

/// Sequential generator for sampling points (not for Brownian increments).
pub fn sampler_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
