//! Adam with bias correction over a [`ParameterStore`].

use std::collections::BTreeMap;

use super::store::ParameterStore;
use crate::{Error, Result};

pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, betas: (f64, f64), eps: f64) -> Result<Self> {
        if lr <= 0.0 {
            return Err(Error::InvalidArg(format!("learning rate must be positive, got {}", lr)));
        }
        Ok(Adam { lr, beta1: betas.0, beta2: betas.1, eps, t: 0, m: BTreeMap::new(), v: BTreeMap::new() })
    }

    /// Standard defaults: lr with beta = (0.9, 0.999), eps = 1e-8.
    pub fn with_lr(lr: f64) -> Result<Self> {
        Self::new(lr, (0.9, 0.999), 1e-8)
    }

    pub fn step(&mut self, store: &mut ParameterStore, grads: &BTreeMap<String, Vec<f64>>) -> Result<()> {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (path, g) in grads {
            let param = store
                .get_mut(path)
                .ok_or_else(|| Error::InvalidArg(format!("gradient for unknown parameter `{}`", path)))?;
            if g.len() != param.data.len() {
                return Err(Error::Shape(format!(
                    "gradient length {} vs parameter length {} for `{}`",
                    g.len(),
                    param.data.len(),
                    path
                )));
            }
            let m = self.m.entry(path.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(path.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                param.data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
