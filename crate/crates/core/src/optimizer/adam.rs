use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One update in place. A non-finite gradient or update leaves both the
    /// parameters and the optimizer state untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::dim(format!(
                "adam over {} values given {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient {} at index {i}",
                grads[i]
            )));
        }
        let t = self.t + 1;
        let bc1 = 1.0 - self.beta1.powf(t as f64);
        let bc2 = 1.0 - self.beta2.powf(t as f64);
        let n = params.len();
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        let mut p = Vec::with_capacity(n);
        for i in 0..n {
            let g = grads[i];
            let mi = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            let vi = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            let pi = params[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
            if !pi.is_finite() {
                return Err(Error::Numerical(format!("update overflowed at index {i}")));
            }
            m.push(mi);
            v.push(vi);
            p.push(pi);
        }
        self.t = t;
        self.m = m;
        self.v = v;
        params.copy_from_slice(&p);
        Ok(())
    }
}
