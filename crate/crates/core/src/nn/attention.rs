//! Feed-forward attention: one scalar score per time step, softmax weights,
//! and a single context vector for the whole sequence.
//!
//! ```text
//! e_t = w · tanh(M h_t + b)
//! α   = softmax(e)
//! c   = Σ_t α_t h_t
//! ```

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::init::{glorot, glorot_vec};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// k x d
    pub m: Array2<f64>,
    pub b: Array1<f64>,
    pub w: Array1<f64>,
}

impl AttentionParams {
    pub fn zeros(d: usize, k: usize) -> Self {
        Self {
            m: Array2::zeros((k, d)),
            b: Array1::zeros(k),
            w: Array1::zeros(k),
        }
    }

    pub fn init<R: Rng>(d: usize, k: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(d, k);
        glorot(&mut p.m, rng);
        glorot_vec(&mut p.w, rng);
        p
    }

    pub fn dim(&self) -> usize {
        self.m.ncols()
    }

    pub fn width(&self) -> usize {
        self.m.nrows()
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 3] {
        [
            ("m", self.m.as_slice().unwrap()),
            ("b", self.b.as_slice().unwrap()),
            ("w", self.w.as_slice().unwrap()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 3] {
        [
            self.m.as_slice_mut().unwrap(),
            self.b.as_slice_mut().unwrap(),
            self.w.as_slice_mut().unwrap(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub h: Array2<f64>,
    /// tanh(M h_t + b), T x k
    pub a: Array2<f64>,
    pub alpha: Array1<f64>,
}

/// Numerically stable softmax.
pub fn softmax(e: &Array1<f64>) -> Array1<f64> {
    let max = e.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let ex = e.mapv(|v| (v - max).exp());
    let z = ex.sum();
    ex / z
}

/// Scores of every row of `h`.
pub fn scores(h: ArrayView2<f64>, p: &AttentionParams) -> (Array2<f64>, Array1<f64>) {
    let a = (h.dot(&p.m.t()) + &p.b).mapv(f64::tanh);
    let e = a.dot(&p.w);
    (a, e)
}

/// Context vector and weights; rows of `h` are time steps.
pub fn attention_forward(h: ArrayView2<f64>, p: &AttentionParams) -> (Array1<f64>, AttentionCache) {
    let (a, e) = scores(h, p);
    let alpha = softmax(&e);
    let c = h.t().dot(&alpha);
    (
        c,
        AttentionCache {
            h: h.to_owned(),
            a,
            alpha,
        },
    )
}

/// Adds parameter gradients into `grad` and returns dL/dH.
pub fn attention_backward(
    p: &AttentionParams,
    cache: &AttentionCache,
    dc: &Array1<f64>,
    grad: &mut AttentionParams,
) -> Array2<f64> {
    let h = &cache.h;
    let alpha = &cache.alpha;
    let dalpha = h.dot(dc);
    let mean = alpha.dot(&dalpha);
    let de = alpha * &(dalpha - mean);
    grad.w += &cache.a.t().dot(&de);
    // dZ = (de ⊗ w) ⊙ (1 − A²)
    let mut dz = cache.a.mapv(|a| 1.0 - a * a);
    for (mut row, &d) in dz.axis_iter_mut(Axis(0)).zip(de.iter()) {
        row *= d;
        row *= &p.w;
    }
    grad.m += &dz.t().dot(h);
    grad.b += &dz.sum_axis(Axis(0));
    let mut dh = dz.dot(&p.m);
    for (mut row, &a) in dh.axis_iter_mut(Axis(0)).zip(alpha.iter()) {
        row.scaled_add(a, dc);
    }
    dh
}
