//! Counter-based seeding and the frozen normal generator.
//!
//! Every perturbation is addressed by a `u64` seed derived purely from a
//! master seed and integer counters, so any party can regenerate any sample
//! without replaying a shared stream. Sample streams are ChaCha8; normals come
//! from the ziggurat sampler in `rand_distr`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Domain tags keep seeds for different purposes apart.
pub mod domain {
    pub const TRIAL: u64 = 0x7472_6961_6c00_0001;
    pub const ROUND: u64 = 0x726f_756e_6400_0002;
    pub const STEP: u64 = 0x7374_6570_0000_0003;
    pub const INPUT: u64 = 0x696e_7075_7400_0004;
    pub const SWEEP: u64 = 0x7377_6565_7000_0005;
    pub const BATCH: u64 = 0x6261_7463_6800_0006;
    pub const DATA: u64 = 0x6461_7461_0000_0007;
    pub const INIT: u64 = 0x696e_6974_0000_0008;
}

/// SplitMix64 output function.
#[inline]
pub fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a seed with a counter. For a fixed `seed` this is a bijection in
/// `counter`, so distinct counters never collide.
#[inline]
pub fn mix(seed: u64, counter: u64) -> u64 {
    finalize(finalize(seed ^ GOLDEN).wrapping_add(counter.wrapping_mul(GOLDEN)))
}

/// Seed of the `n`-th perturbation in a batch.
#[inline]
pub fn sample_seed(master: u64, n: u64) -> u64 {
    mix(master, n)
}

/// Master seed of a sub-experiment (trial, round, step, ...) in a domain.
#[inline]
pub fn derive(master: u64, domain: u64, index: u64) -> u64 {
    mix(mix(master, domain), index)
}

/// Batch master seed used by every party for round `round` of the
/// seed-sharing protocol.
#[inline]
pub fn round_seed(master: u64, round: u64) -> u64 {
    derive(master, domain::ROUND, round)
}

/// A stream of uniforms, normals and signs from one seed.
#[derive(Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// `+1.0` or `-1.0` with equal probability.
    pub fn sign(&mut self) -> f64 {
        if self.rng.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform index in `0..n` (Lemire's multiply-shift, slightly biased for
    /// huge `n`, irrelevant at dataset sizes).
    pub fn index(&mut self, n: usize) -> usize {
        ((self.rng.next_u64() as u128 * n as u128) >> 64) as usize
    }
}
