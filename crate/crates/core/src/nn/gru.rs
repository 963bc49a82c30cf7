//! Gated recurrent unit with separate update, reset and candidate weights.
//!
//! ```text
//! g_u = σ(W_ux x + W_uh h_prev + b_u)
//! g_r = σ(W_rx x + W_rh h_prev + b_r)
//! q   = tanh(W_hx x + W_hh (g_r ⊙ h_prev) + b_h)
//! h   = (1 − g_u) ⊙ h_prev + g_u ⊙ q
//! ```

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

use super::init::glorot;

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_ux: Array2<f64>,
    pub w_uh: Array2<f64>,
    pub b_u: Array1<f64>,
    pub w_rx: Array2<f64>,
    pub w_rh: Array2<f64>,
    pub b_r: Array1<f64>,
    pub w_hx: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub b_h: Array1<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl GruParams {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        let wx = || Array2::zeros((d_out, d_in));
        let wh = || Array2::zeros((d_out, d_out));
        let b = || Array1::zeros(d_out);
        Self {
            w_ux: wx(),
            w_uh: wh(),
            b_u: b(),
            w_rx: wx(),
            w_rh: wh(),
            b_r: b(),
            w_hx: wx(),
            w_hh: wh(),
            b_h: b(),
        }
    }

    pub fn init<R: Rng>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(d_in, d_out);
        for w in [&mut p.w_ux, &mut p.w_rx, &mut p.w_hx, &mut p.w_uh, &mut p.w_rh, &mut p.w_hh] {
            glorot(w, rng);
        }
        p
    }

    pub fn d_in(&self) -> usize {
        self.w_ux.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w_ux.nrows()
    }

    pub fn check(&self) -> Result<()> {
        let (o, i) = (self.d_out(), self.d_in());
        let ok = [&self.w_ux, &self.w_rx, &self.w_hx]
            .iter()
            .all(|w| w.dim() == (o, i))
            && [&self.w_uh, &self.w_rh, &self.w_hh]
                .iter()
                .all(|w| w.dim() == (o, o))
            && [&self.b_u, &self.b_r, &self.b_h].iter().all(|b| b.len() == o);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!("inconsistent GRU parameters for {i}->{o}")))
        }
    }

    /// Named tensors in a fixed order; biases are 1-row matrices.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 9] {
        fn v(a: &Array2<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        fn b(a: &Array1<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        [
            ("w_ux", v(&self.w_ux)),
            ("w_uh", v(&self.w_uh)),
            ("b_u", b(&self.b_u)),
            ("w_rx", v(&self.w_rx)),
            ("w_rh", v(&self.w_rh)),
            ("b_r", b(&self.b_r)),
            ("w_hx", v(&self.w_hx)),
            ("w_hh", v(&self.w_hh)),
            ("b_h", b(&self.b_h)),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 9] {
        [
            self.w_ux.as_slice_mut().unwrap(),
            self.w_uh.as_slice_mut().unwrap(),
            self.b_u.as_slice_mut().unwrap(),
            self.w_rx.as_slice_mut().unwrap(),
            self.w_rh.as_slice_mut().unwrap(),
            self.b_r.as_slice_mut().unwrap(),
            self.w_hx.as_slice_mut().unwrap(),
            self.w_hh.as_slice_mut().unwrap(),
            self.b_h.as_slice_mut().unwrap(),
        ]
    }
}

/// Intermediates of one cell step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    pub g_u: Array1<f64>,
    pub g_r: Array1<f64>,
    pub q: Array1<f64>,
}

pub fn gru_cell_step(
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    p: &GruParams,
) -> Result<(Array1<f64>, StepCache)> {
    p.check()?;
    if x.len() != p.d_in() || h_prev.len() != p.d_out() {
        return Err(Error::Shape(format!(
            "cell {}->{} given x of {} and h of {}",
            p.d_in(),
            p.d_out(),
            x.len(),
            h_prev.len()
        )));
    }
    let g_u = (p.w_ux.dot(&x) + p.w_uh.dot(&h_prev) + &p.b_u).mapv(sigmoid);
    let g_r = (p.w_rx.dot(&x) + p.w_rh.dot(&h_prev) + &p.b_r).mapv(sigmoid);
    let rh = &g_r * &h_prev;
    let q = (p.w_hx.dot(&x) + p.w_hh.dot(&rh) + &p.b_h).mapv(f64::tanh);
    let h = (1.0 - &g_u) * &h_prev + &g_u * &q;
    Ok((h, StepCache { g_u, g_r, q }))
}

/// Everything the layer backward pass needs, T rows each.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub x: Array2<f64>,
    /// Row t is the hidden state entering step t.
    pub h_prev: Array2<f64>,
    pub g_u: Array2<f64>,
    pub g_r: Array2<f64>,
    pub q: Array2<f64>,
}

/// Run the layer over every row of `x` from h0 = 0; returns all hidden states.
pub fn gru_layer_forward(x: ArrayView2<f64>, p: &GruParams) -> Result<(Array2<f64>, LayerCache)> {
    p.check()?;
    let (t_len, d_in) = x.dim();
    if t_len == 0 {
        return Err(Error::Shape("GRU layer needs at least one time step".into()));
    }
    if d_in != p.d_in() {
        return Err(Error::Shape(format!(
            "GRU layer expects {} input columns, got {d_in}",
            p.d_in()
        )));
    }
    let d = p.d_out();
    // Input projections for all steps at once.
    let xu = x.dot(&p.w_ux.t()) + &p.b_u;
    let xr = x.dot(&p.w_rx.t()) + &p.b_r;
    let xh = x.dot(&p.w_hx.t()) + &p.b_h;

    let mut h_out = Array2::zeros((t_len, d));
    let mut h_prev = Array2::zeros((t_len, d));
    let mut g_u = Array2::zeros((t_len, d));
    let mut g_r = Array2::zeros((t_len, d));
    let mut q = Array2::zeros((t_len, d));
    let mut h = Array1::<f64>::zeros(d);
    let mut rh = Array1::<f64>::zeros(d);
    for t in 0..t_len {
        h_prev.row_mut(t).assign(&h);
        let u = (&xu.row(t) + &p.w_uh.dot(&h)).mapv(sigmoid);
        let r = (&xr.row(t) + &p.w_rh.dot(&h)).mapv(sigmoid);
        Zip::from(&mut rh).and(&r).and(&h).for_each(|o, &r, &h| *o = r * h);
        let c = (&xh.row(t) + &p.w_hh.dot(&rh)).mapv(f64::tanh);
        Zip::from(&mut h)
            .and(&u)
            .and(&c)
            .for_each(|h, &u, &c| *h = (1.0 - u) * *h + u * c);
        h_out.row_mut(t).assign(&h);
        g_u.row_mut(t).assign(&u);
        g_r.row_mut(t).assign(&r);
        q.row_mut(t).assign(&c);
    }
    Ok((
        h_out,
        LayerCache {
            x: x.to_owned(),
            h_prev,
            g_u,
            g_r,
            q,
        },
    ))
}

/// Backpropagation through time. `dh_out` is dL/dh_t for every t; gradients
/// are added into `grad`, and dL/dx is returned.
pub fn gru_layer_backward(
    p: &GruParams,
    cache: &LayerCache,
    dh_out: ArrayView2<f64>,
    grad: &mut GruParams,
) -> Result<Array2<f64>> {
    let (t_len, d) = cache.h_prev.dim();
    if dh_out.dim() != (t_len, d) || d != p.d_out() || cache.x.ncols() != p.d_in() {
        return Err(Error::StaleCache(format!(
            "GRU cache is {t_len}x{d}, upstream gradient {:?}, layer {}->{}",
            dh_out.dim(),
            p.d_in(),
            p.d_out()
        )));
    }
    // Pre-activation gradients per step, filled back to front.
    let mut da_u = Array2::<f64>::zeros((t_len, d));
    let mut da_r = Array2::<f64>::zeros((t_len, d));
    let mut da_h = Array2::<f64>::zeros((t_len, d));
    let mut rh = Array2::<f64>::zeros((t_len, d));
    let mut dh_next = Array1::<f64>::zeros(d);
    let w_hh_t = p.w_hh.t();
    let w_uh_t = p.w_uh.t();
    let w_rh_t = p.w_rh.t();
    for t in (0..t_len).rev() {
        let hp = cache.h_prev.row(t);
        let u = cache.g_u.row(t);
        let r = cache.g_r.row(t);
        let q = cache.q.row(t);
        let dh = &dh_out.row(t) + &dh_next;

        let mut dah = da_h.row_mut(t);
        Zip::from(&mut dah)
            .and(&dh)
            .and(&u)
            .and(&q)
            .for_each(|o, &dh, &u, &q| *o = dh * u * (1.0 - q * q));
        let mut dau = da_u.row_mut(t);
        Zip::from(&mut dau)
            .and(&dh)
            .and(&u)
            .and(&q)
            .and(&hp)
            .for_each(|o, &dh, &u, &q, &hp| *o = dh * (q - hp) * u * (1.0 - u));
        let drh = w_hh_t.dot(&da_h.row(t));
        let mut dar = da_r.row_mut(t);
        Zip::from(&mut dar)
            .and(&drh)
            .and(&hp)
            .and(&r)
            .for_each(|o, &drh, &hp, &r| *o = drh * hp * r * (1.0 - r));
        Zip::from(&mut rh.row_mut(t))
            .and(&r)
            .and(&hp)
            .for_each(|o, &r, &hp| *o = r * hp);

        let mut dhp = w_uh_t.dot(&da_u.row(t)) + w_rh_t.dot(&da_r.row(t));
        Zip::from(&mut dhp)
            .and(&dh)
            .and(&u)
            .and(&drh)
            .and(&r)
            .for_each(|o, &dh, &u, &drh, &r| *o += dh * (1.0 - u) + drh * r);
        dh_next = dhp;
    }
    let x = &cache.x;
    grad.w_ux += &da_u.t().dot(x);
    grad.w_rx += &da_r.t().dot(x);
    grad.w_hx += &da_h.t().dot(x);
    grad.w_uh += &da_u.t().dot(&cache.h_prev);
    grad.w_rh += &da_r.t().dot(&cache.h_prev);
    grad.w_hh += &da_h.t().dot(&rh);
    grad.b_u += &da_u.sum_axis(Axis(0));
    grad.b_r += &da_r.sum_axis(Axis(0));
    grad.b_h += &da_h.sum_axis(Axis(0));
    Ok(da_u.dot(&p.w_ux) + da_r.dot(&p.w_rx) + da_h.dot(&p.w_hx))
}

/// Rows `t` of the cache as a single-step cache.
pub fn step_cache(cache: &LayerCache, t: usize) -> StepCache {
    StepCache {
        g_u: cache.g_u.slice(s![t, ..]).to_owned(),
        g_r: cache.g_r.slice(s![t, ..]).to_owned(),
        q: cache.q.slice(s![t, ..]).to_owned(),
    }
}
