//! Seeded random streams.
//!
//! Every random object is drawn from a ChaCha8 stream keyed by a 64-bit seed.
//! Independent streams for trials are derived with [`child_seed`], so a trial's
//! draws never depend on how many other trials ran or in which order.

use ndarray::Array1;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for the `index`-th child of `master`.
pub fn child_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Array1<f64> {
    Array1::from_iter((0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Uniform draw from the unit sphere in `len` dimensions.
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Array1<f64> {
    loop {
        let g = gaussian_vector(rng, len);
        let norm = g.dot(&g).sqrt();
        if norm > 0.0 {
            return g / norm;
        }
    }
}
