use ndarray::{Array1, Array2};
use rand::Rng;

/// Uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)); a matrix maps
/// `ncols` inputs to `nrows` outputs.
pub fn glorot<R: Rng>(w: &mut Array2<f64>, rng: &mut R) {
    let s = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
    w.mapv_inplace(|_| rng.random_range(-s..s));
}

/// Same rule for a vector projecting `len` inputs to one output.
pub fn glorot_vec<R: Rng>(w: &mut Array1<f64>, rng: &mut R) {
    let s = (6.0 / (w.len() + 1) as f64).sqrt();
    w.mapv_inplace(|_| rng.random_range(-s..s));
}
