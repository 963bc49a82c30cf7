//! The full regressor: stacked GRUs, dropout, pooling, two dense layers.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::{attention_backward, attention_forward, AttentionCache, AttentionParams};
use super::gru::{gru_layer_backward, gru_layer_forward, GruParams, LayerCache};
use super::init::{glorot, glorot_vec};
use crate::error::{Error, Result};

/// How the last GRU layer's sequence collapses to one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Attention,
    /// Hidden state after the final step.
    Last,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Attention => "attention",
            Pooling::Last => "last",
        })
    }
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(Pooling::Attention),
            "last" => Ok(Pooling::Last),
            _ => Err(Error::Config(format!("unknown pooling {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub depth: usize,
    pub pooling: Pooling,
    pub attention_width: usize,
    pub dense: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 12,
            hidden: 256,
            depth: 2,
            pooling: Pooling::Attention,
            attention_width: 64,
            dense: 64,
            dropout: 0.25,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.depth == 0 || self.dense == 0 {
            return Err(Error::Config(format!("degenerate model dimensions {self:?}")));
        }
        if self.pooling == Pooling::Attention && self.attention_width == 0 {
            return Err(Error::Config("attention width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub grus: Vec<GruParams>,
    pub attention: Option<AttentionParams>,
    /// dense × hidden
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    /// Single-element output bias.
    pub b2: Array1<f64>,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let grus = (0..config.depth)
            .map(|l| GruParams::zeros(if l == 0 { config.input_dim } else { h }, h))
            .collect();
        Ok(Self {
            config,
            grus,
            attention: (config.pooling == Pooling::Attention)
                .then(|| AttentionParams::zeros(h, config.attention_width)),
            w1: Array2::zeros((config.dense, h)),
            b1: Array1::zeros(config.dense),
            w2: Array1::zeros(config.dense),
            b2: Array1::zeros(1),
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for g in &mut p.grus {
            *g = GruParams::init(g.d_in(), g.d_out(), &mut rng);
        }
        if let Some(a) = &mut p.attention {
            *a = AttentionParams::init(config.hidden, config.attention_width, &mut rng);
        }
        glorot(&mut p.w1, &mut rng);
        glorot_vec(&mut p.w2, &mut rng);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config).expect("config already validated")
    }

    /// Every tensor, flattened row-major, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (l, g) in self.grus.iter().enumerate() {
            for (name, t) in g.tensors() {
                out.push((format!("gru{l}.{name}"), t));
            }
        }
        if let Some(a) = &self.attention {
            for (name, t) in a.tensors() {
                out.push((format!("attention.{name}"), t));
            }
        }
        out.push(("dense1.w".into(), self.w1.as_slice().unwrap()));
        out.push(("dense1.b".into(), self.b1.as_slice().unwrap()));
        out.push(("dense2.w".into(), self.w2.as_slice().unwrap()));
        out.push(("dense2.b".into(), self.b2.as_slice().unwrap()));
        out
    }

    /// Same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for g in &mut self.grus {
            out.extend(g.tensors_mut());
        }
        if let Some(a) = &mut self.attention {
            out.extend(a.tensors_mut());
        }
        out.push(self.w1.as_slice_mut().unwrap());
        out.push(self.b1.as_slice_mut().unwrap());
        out.push(self.w2.as_slice_mut().unwrap());
        out.push(self.b2.as_slice_mut().unwrap());
        out
    }

    /// Tensor shapes in [`tensors`](Self::tensors) order.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for g in &self.grus {
            let (o, i) = (g.d_out(), g.d_in());
            for _ in 0..3 {
                out.extend([(o, i), (o, o), (1, o)]);
            }
        }
        if let Some(a) = &self.attention {
            out.extend([a.m.dim(), (1, a.width()), (1, a.width())]);
        }
        out.extend([self.w1.dim(), (1, self.b1.len()), (1, self.w2.len()), (1, 1)]);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b.1).for_each(|(a, b)| *a += b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= k);
        }
    }

    /// Order-sensitive hash of every parameter bit, used to detect a
    /// forward cache that no longer matches the parameters.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, t) in self.tensors() {
            for v in t {
                h = (h ^ v.to_bits()).wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, mask drawn from the given seed.
    Train { seed: u64 },
    Infer,
}

#[derive(Debug, Clone)]
pub struct ModelCache {
    fingerprint: u64,
    layers: Vec<LayerCache>,
    /// Scaled keep mask (0 or 1/(1−p)), present in train mode with p > 0.
    mask: Option<Array2<f64>>,
    attention: Option<AttentionCache>,
    pooled: Array1<f64>,
    z1: Array1<f64>,
    a1: Array1<f64>,
    /// Output shape of every stage, input first.
    pub trace: Vec<Vec<usize>>,
}

pub fn model_forward(x: ArrayView2<f64>, params: &ModelParams, mode: Mode) -> Result<(f64, ModelCache)> {
    let cfg = params.config;
    if x.ncols() != cfg.input_dim {
        return Err(Error::Shape(format!(
            "model expects {} channels, got {}",
            cfg.input_dim,
            x.ncols()
        )));
    }
    let mut trace = vec![vec![x.nrows(), x.ncols()]];
    let mut layers = Vec::with_capacity(params.grus.len());
    let mut h = x.to_owned();
    for g in &params.grus {
        let (out, cache) = gru_layer_forward(h.view(), g)?;
        trace.push(vec![out.nrows(), out.ncols()]);
        layers.push(cache);
        h = out;
    }
    let mask = match mode {
        Mode::Train { seed } if cfg.dropout > 0.0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let keep = 1.0 - cfg.dropout;
            let m = Array2::from_shape_fn(h.dim(), |_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            });
            h *= &m;
            Some(m)
        }
        _ => None,
    };
    let (pooled, attention) = match &params.attention {
        Some(a) => {
            let (c, cache) = attention_forward(h.view(), a);
            (c, Some(cache))
        }
        None => (h.row(h.nrows() - 1).to_owned(), None),
    };
    trace.push(vec![1, pooled.len()]);
    let z1 = params.w1.dot(&pooled) + &params.b1;
    let a1 = z1.mapv(|v| v.max(0.0));
    trace.push(vec![1, a1.len()]);
    let y = params.w2.dot(&a1) + params.b2[0];
    trace.push(vec![1]);
    Ok((
        y,
        ModelCache {
            fingerprint: params.fingerprint(),
            layers,
            mask,
            attention,
            pooled,
            z1,
            a1,
            trace,
        },
    ))
}

/// Gradients of a loss with respect to every parameter, given dL/dŷ.
pub fn model_backward(params: &ModelParams, cache: &ModelCache, dy: f64) -> Result<ModelParams> {
    if cache.fingerprint != params.fingerprint() || cache.layers.len() != params.grus.len() {
        return Err(Error::StaleCache(
            "parameters changed since the forward pass".into(),
        ));
    }
    let mut grad = params.zeros_like();
    grad.w2.scaled_add(dy, &cache.a1);
    grad.b2[0] += dy;
    let mut dz1 = &params.w2 * dy;
    Zip::from(&mut dz1).and(&cache.z1).for_each(|d, &z| {
        if z <= 0.0 {
            *d = 0.0;
        }
    });
    for (mut row, &d) in grad.w1.rows_mut().into_iter().zip(dz1.iter()) {
        row.scaled_add(d, &cache.pooled);
    }
    grad.b1 += &dz1;
    let dpooled = params.w1.t().dot(&dz1);

    let last = cache.layers.last().expect("depth >= 1");
    let (t_len, d) = last.h_prev.dim();
    let mut dh = match (&params.attention, &cache.attention) {
        (Some(a), Some(ac)) => {
            attention_backward(a, ac, &dpooled, grad.attention.as_mut().unwrap())
        }
        (None, None) => {
            let mut dh = Array2::zeros((t_len, d));
            dh.row_mut(t_len - 1).assign(&dpooled);
            dh
        }
        _ => return Err(Error::StaleCache("pooling kind differs from cache".into())),
    };
    if let Some(m) = &cache.mask {
        dh *= m;
    }
    for (l, (g, lc)) in params.grus.iter().zip(&cache.layers).enumerate().rev() {
        dh = gru_layer_backward(g, lc, dh.view(), &mut grad.grus[l])?;
    }
    Ok(grad)
}
