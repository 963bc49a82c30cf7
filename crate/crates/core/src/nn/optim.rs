use super::model::ModelParams;
use crate::error::{Error, Result};

pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// RMSProp without momentum:
/// v ← ρv + (1−ρ)g², θ ← θ − lr·g/(√v + ε).
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub rho: f64,
    pub epsilon: f64,
    /// Running mean of squared gradients, shaped like the parameters.
    pub v: ModelParams,
}

impl RmsProp {
    pub fn new(params: &ModelParams, rho: f64, epsilon: f64) -> Self {
        Self {
            rho,
            epsilon,
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams, lr: f64) -> Result<()> {
        if params.shapes() != grad.shapes() || params.shapes() != self.v.shapes() {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        let (rho, eps) = (self.rho, self.epsilon);
        for ((theta, g), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.v.tensors_mut())
        {
            for ((theta, g), v) in theta.iter_mut().zip(g.1).zip(v.iter_mut()) {
                *v = rho * *v + (1.0 - rho) * g * g;
                *theta -= lr * g / (v.sqrt() + eps);
            }
        }
        Ok(())
    }
}
