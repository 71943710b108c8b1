//! Seeded, splittable random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha20 stream keyed
//! by the top-level seed. Independent consumers are separated by the ChaCha
//! stream id, which is derived as `(tag << 32) | index`: the tag names the
//! consumer (forward channel noise, completion noise, Monte-Carlo strata,
//! ...) and the index names a sub-stream (a sweep cell, a trial). Two
//! streams with different `(tag, index)` pairs never overlap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Stream tags. Values are part of the reproducibility contract; do not renumber.
pub mod tag {
    pub const FORWARD_NOISE: u32 = 1;
    pub const COMPLETION_NOISE: u32 = 2;
    pub const FLASH_INPUT: u32 = 3;
    pub const MC_ON: u32 = 4;
    pub const MC_OFF: u32 = 5;
    pub const PPM_MESSAGE: u32 = 6;
    pub const SWEEP_CELL: u32 = 7;
    pub const PAST_SAMPLER: u32 = 8;
}

/// Build the ChaCha20 generator for `(seed, tag, index)`.
pub fn stream(seed: u64, tag: u32, index: u32) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(tag) << 32) | u64::from(index));
    rng
}

/// Derive a child seed for a sub-computation (a sweep cell, a trial) that
/// itself splits into tagged streams.
pub fn child_seed(seed: u64, tag: u32, index: u32) -> u64 {
    stream(seed, tag, index).random()
}

/// Source of IID standard-normal draws.
pub trait NoiseSource {
    fn standard_normal(&mut self) -> f64;
}

/// Standard-normal draws from a tagged ChaCha20 stream.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha20Rng,
}

impl GaussianStream {
    pub fn new(seed: u64, tag: u32, index: u32) -> Self {
        Self {
            rng: stream(seed, tag, index),
        }
    }

    pub fn from_rng(rng: ChaCha20Rng) -> Self {
        Self { rng }
    }
}

impl NoiseSource for GaussianStream {
    #[inline]
    fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// Replays a fixed list of draws, then zeros. Useful for forcing `U_k` in tests
/// and worked examples.
#[derive(Debug, Clone, Default)]
pub struct ScriptedNoise {
    draws: Vec<f64>,
    pos: usize,
}

impl ScriptedNoise {
    pub fn new(draws: Vec<f64>) -> Self {
        Self { draws, pos: 0 }
    }

    pub fn zeros() -> Self {
        Self::default()
    }
}

impl NoiseSource for ScriptedNoise {
    fn standard_normal(&mut self) -> f64 {
        let u = self.draws.get(self.pos).copied().unwrap_or(0.0);
        self.pos += 1;
        u
    }
}

impl<N: NoiseSource + ?Sized> NoiseSource for &mut N {
    fn standard_normal(&mut self) -> f64 {
        (**self).standard_normal()
    }
}
