use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::{Gradients, ReconstructorParams};
use super::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment state. Moments are kept in `f64` regardless of the
/// parameter type.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl OptimState {
    pub fn new<T: Real>(params: &ReconstructorParams<T>, config: AdamConfig) -> Self {
        let n = params.len();
        Self {
            config,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// One bias-corrected update. A non-finite gradient rejects the step
    /// and leaves both `params` and `self` untouched.
    pub fn step<T: Real>(
        &mut self,
        params: &mut ReconstructorParams<T>,
        grads: &Gradients<T>,
        lr: f64,
    ) -> Result<()> {
        let n = params.len();
        if grads.len() != n || self.m.len() != n || self.v.len() != n {
            return Err(Error::shape(n.to_string(), grads.len().to_string()));
        }
        if let Some(i) = grads.tensors().flatten().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(i));
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let mut i = 0;
        for (p, g) in params.tensors_mut().zip(grads.tensors()) {
            for (pv, gv) in p.iter_mut().zip(g) {
                let g = gv.to_f64().unwrap();
                let m = beta1 * self.m[i] + (1.0 - beta1) * g;
                let v = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                self.m[i] = m;
                self.v[i] = v;
                let update = lr * (m / c1) / ((v / c2).sqrt() + eps);
                *pv = T::from(pv.to_f64().unwrap() - update).unwrap();
                i += 1;
            }
        }
        Ok(())
    }
}
