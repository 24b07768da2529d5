use crate::error::{NetError, Result};
use crate::param::{Grads, ParamSet};

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64, beta1: f64, beta2: f64) -> Self {
        let zeros = || params.entries().iter().map(|p| vec![0.0; p.data.len()]).collect();
        Self {
            lr,
            beta1,
            beta2,
            epsilon: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.v
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads) -> Result<()> {
        if grads.bufs.len() != self.m.len() || params.len() != self.m.len() {
            return Err(NetError::ShapeMismatch {
                op: "adam_step",
                expected: vec![self.m.len()],
                got: vec![params.len(), grads.bufs.len()],
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .entries_mut()
            .iter_mut()
            .zip(&grads.bufs)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            if p.data.len() != g.len() || m.len() != g.len() {
                return Err(NetError::ShapeMismatch {
                    op: "adam_step",
                    expected: vec![p.data.len()],
                    got: vec![g.len()],
                });
            }
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
