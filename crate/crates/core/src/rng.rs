//! Counter-based seed splitting and the Gaussian transform used for disorder.
//!
//! Every realization owns an independent stream keyed by
//! `(master_seed, realization_index)`, so the order in which workers pick up
//! realizations never changes the numbers they draw.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer (Stafford variant 13).
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the stream belonging to one realization.
pub fn stream_seed(master_seed: u64, realization_index: u64) -> u64 {
    mix64(master_seed ^ mix64(realization_index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Standard normal variates via the Marsaglia polar method.
///
/// Uniforms are the top 53 bits of ChaCha8 output mapped to `[-1, 1)`.
/// Variates come in pairs; the second of each pair is handed out on the next
/// call, so the sequence is a pure function of the seed.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn for_realization(master_seed: u64, realization_index: u64) -> Self {
        Self::new(stream_seed(master_seed, realization_index))
    }

    fn symmetric_uniform(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        2.0 * (bits as f64) * (1.0 / (1u64 << 53) as f64) - 1.0
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = self.symmetric_uniform();
            let v = self.symmetric_uniform();
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * factor);
                return u * factor;
            }
        }
    }

    pub fn next_normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.next_standard()
    }
}
