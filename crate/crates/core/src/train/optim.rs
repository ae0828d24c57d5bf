use crate::error::{Error, Result};
use crate::model::Parameters;

/// Adam with bias correction and a constant learning rate.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Parameters,
    v: Parameters,
    t: usize,
}

impl Adam {
    pub fn new(params: &Parameters, learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            eps,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> usize {
        self.t
    }

    pub fn step(&mut self, params: &mut Parameters, grads: &Parameters) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::Divergence { step: self.t + 1 });
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let g = grads.tensors();
        let mut p = params.tensors_mut();
        let mut m = self.m.tensors_mut();
        let mut v = self.v.tensors_mut();
        if g.len() != p.len() || m.len() != p.len() {
            return Err(Error::shape(
                "optimizer state does not match the parameters",
            ));
        }
        for (((p, g), m), v) in p.iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
            if p.shape != g.shape || p.shape != m.shape {
                return Err(Error::shape(format!(
                    "gradient for {} has the wrong shape",
                    p.name
                )));
            }
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= self.learning_rate * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
