//! Random streams.
//!
//! Every stochastic run is keyed by `(seed, stream)`. Replicate `r` of a
//! Monte Carlo batch always reads stream `r`, so candidate policies evaluated
//! on the same seed see identical initial errors and noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::NoiseDist;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fills `out` with unit-variance zero-mean draws. Callers scale by sigma so
/// that the underlying variates do not depend on the noise level.
pub fn fill_standard(rng: &mut impl Rng, dist: NoiseDist, out: &mut [f64]) {
    match dist {
        NoiseDist::Gaussian => {
            for v in out.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        }
        NoiseDist::Uniform => {
            let half = 3f64.sqrt();
            for v in out.iter_mut() {
                *v = (2.0 * rng.random::<f64>() - 1.0) * half;
            }
        }
    }
}
