//! Synthetic reference O-D matrices for sweeps over arbitrary N.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::matrix::{MatrixError, ODShareMatrix};

/// Fill an N×N matrix with uniform draws on (0, 1] and rescale to unit
/// sum. Entries are strictly positive so multiplicative noise never
/// degenerates. Deterministic per seed.
pub fn generate_uniform(n_stops: usize, seed: u64) -> Result<ODShareMatrix, MatrixError> {
    if n_stops < 2 {
        return Err(MatrixError::TooFewStops(n_stops));
    }
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    let mut raw: Vec<f64> = (0..n_stops * n_stops)
        .map(|_| loop {
            let v: f64 = rng.gen();
            if v > 0.0 {
                break v;
            }
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter_mut().for_each(|x| *x /= total);
    ODShareMatrix::new(n_stops, raw)
}
