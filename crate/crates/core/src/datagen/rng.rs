//! Seeded randomness. Every draw in the crate comes from a ChaCha8 generator
//! keyed by a run seed plus a fixed stream id, so independent consumers of the
//! same seed never share a sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GENERATOR_NAME: &str = "ChaCha8";

/// Stream ids for the different consumers of a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    GroundTruth = 1,
    Samples = 2,
    Weights = 3,
    Graph = 4,
    Traffic = 5,
    Gating = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Box–Muller; uses the cosine branch only so each call consumes exactly two
/// uniforms.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, std_dev: f64) -> f64 {
    mean + std_dev * standard_normal(rng)
}

/// Chi-squared with two degrees of freedom, i.e. `-2 ln U`.
pub fn chi_squared_2<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    -2.0 * u.ln()
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
