//! Seed derivation and the two primitive samplers every channel relies on.
//!
//! All randomness is drawn from ChaCha8 streams. A master seed is split into
//! named children with [`derive_seed`]; per-individual randomness uses the
//! ChaCha stream id so that row `i` of a release never depends on how many
//! rows were generated before it.

use rand::distributions::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream tags used when splitting a trial seed.
pub mod tag {
    pub const SAMPLE: u64 = 0x5341_4d50;
    pub const STAGE_ONE: u64 = 0x5354_4731;
    pub const STAGE_TWO: u64 = 0x5354_4732;
    pub const SAMPLE_TWO: u64 = 0x5341_4d32;
    pub const TRIAL: u64 = 0x5452_4941;
    pub const NU: u64 = 0x4e55_4e55;
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `(seed, tag)`; distinct tags give unrelated children.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed.wrapping_add(GOLDEN_GAMMA) ^ mix64(tag.wrapping_mul(GOLDEN_GAMMA).wrapping_add(1)))
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rows of a release share one key and differ by ChaCha stream id.
#[derive(Clone)]
pub struct RowStreams {
    base: ChaCha8Rng,
}

impl RowStreams {
    pub fn new(seed: u64) -> Self {
        Self { base: seeded(seed) }
    }

    pub fn row(&self, index: usize) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(index as u64);
        rng.set_word_pos(0);
        rng
    }
}

/// Standard Laplace draw (density e^{-|x|}/2) by inverse CDF.
pub fn standard_laplace<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let v: f64 = Open01.sample(rng);
    let u = v - 0.5;
    let tail = (1.0 - 2.0 * u.abs()).ln();
    if u < 0.0 {
        tail
    } else {
        -tail
    }
}

pub fn uniform01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.gen::<f64>()
}
