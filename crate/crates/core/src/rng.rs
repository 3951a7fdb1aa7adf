use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

/// Deterministic random source: ChaCha20 keyed by a 64-bit seed and a stream id.
///
/// Child generators are derived from `(seed, tag)` pairs rather than from the
/// parent's state, so work items get the same samples regardless of the order
/// or thread they run on.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha20Rng,
}

pub const ALGORITHM: &str = "chacha20";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    /// Independent generator for a labelled sub-task.
    pub fn fork(&self, tag: u64) -> Self {
        let stream = splitmix64(self.stream ^ splitmix64(tag.wrapping_add(1)));
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn algorithm(&self) -> &'static str {
        ALGORITHM
    }

    pub fn uniform<T: Real>(&mut self, low: T, high: T) -> T {
        let u: f64 = self.inner.random();
        low + (high - low) * T::of(u)
    }

    pub fn standard_normal<T: Real>(&mut self) -> T {
        let x: f64 = self.inner.sample(StandardNormal);
        T::of(x)
    }

    /// One draw from CN(0, 1): independent real and imaginary parts of variance 1/2.
    pub fn complex_gaussian<T: Real>(&mut self) -> Complex<T> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let re: f64 = self.inner.sample(StandardNormal);
        let im: f64 = self.inner.sample(StandardNormal);
        Complex::new(T::of(re * s), T::of(im * s))
    }

    pub fn complex_gaussian_vec<T: Real>(&mut self, n: usize) -> Vec<Complex<T>> {
        (0..n).map(|_| self.complex_gaussian()).collect()
    }
}
