use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub(crate) type Rng = ChaCha8Rng;

/// Independent streams derived from one user seed.
#[derive(Clone, Copy)]
pub(crate) enum Stream {
    Shift = 1,
    Scramble = 2,
    MonteCarlo = 3,
    Tolerance = 4,
}

pub(crate) fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Uniform draw on [0, 1) with 53 random bits.
pub(crate) fn uniform(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn next_u32(rng: &mut Rng) -> u32 {
    rng.next_u32()
}

/// Public helper for harness code: `count` values drawn log-uniformly in `[lo, hi]`.
pub fn log_uniform_draws(seed: u64, lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut rng = stream(seed, Stream::Tolerance);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|_| (a + (b - a) * uniform(&mut rng)).exp()).collect()
}
