//! Reproducible standard-normal streams.
//!
//! Each stream is a ChaCha8 generator keyed by `(seed, index)`: the seed
//! selects the key and the index selects an independent 64-bit stream. Work
//! can therefore be split across any number of workers without changing a
//! single draw, as long as every path or sample uses its own index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        NormalStream { rng, spare: None }
    }

    /// Next standard normal variate (Box–Muller, both outputs used).
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 ∈ (0, 1] keeps the logarithm finite.
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}
