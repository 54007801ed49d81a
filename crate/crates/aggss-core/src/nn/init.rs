//! Seeded parameter initialization.

use ndarray::ArrayD;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Hands out one deterministic RNG per construction site.
///
/// Layers are built in a fixed order, so drawing a fresh stream per layer
/// keeps initialization stable under refactors that change how many numbers
/// a given layer consumes.
pub struct SeedSequence {
    master: u64,
    counter: u64,
}

impl SeedSequence {
    pub fn new(master: u64) -> Self {
        Self { master, counter: 0 }
    }

    /// Derives an independent stream for a labelled slot.
    pub fn derive(&mut self) -> ChaCha8Rng {
        self.counter += 1;
        let mix = self
            .master
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(self.counter.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        ChaCha8Rng::seed_from_u64(mix)
    }

    /// A stream bound to an explicit slot index, independent of call order.
    pub fn derive_slot(master: u64, slot: u64) -> ChaCha8Rng {
        let mix = master
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(slot.wrapping_mul(0xbf58_476d_1ce4_e5b9))
            .wrapping_add(0x94d0_49bb_1331_11eb);
        ChaCha8Rng::seed_from_u64(mix)
    }
}

/// Uniform He initialization: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
pub fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> ArrayD<f32> {
    let bound = (6.0 / fan_in as f32).sqrt();
    ArrayD::from_shape_fn(shape, |_| rng.gen_range(-bound..bound))
}

/// Uniform U(-1/sqrt(fan_in), 1/sqrt(fan_in)) used for classifier blocks.
pub fn scaled_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> ArrayD<f32> {
    let bound = 1.0 / (fan_in as f32).sqrt();
    ArrayD::from_shape_fn(shape, |_| rng.gen_range(-bound..bound))
}
