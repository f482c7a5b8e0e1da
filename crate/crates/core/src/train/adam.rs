use serde::{Deserialize, Serialize};

use crate::params::ParamStore;

/// Bias-corrected Adam with per-parameter moment buffers.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        Self::with_betas(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            beta1,
            beta2,
            eps,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Vec<f64>], lr: f64) {
        assert_eq!(grads.len(), params.len(), "one gradient per parameter");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, tensor) in params.tensors_mut().iter_mut().enumerate() {
            let (m, v, gr) = (&mut self.first[k], &mut self.second[k], &grads[k]);
            assert_eq!(gr.len(), tensor.numel(), "gradient shape for parameter {k}");
            for (j, w) in tensor.data_mut().iter_mut().enumerate() {
                let gj = gr[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Step decay: `initial` until `drop_epoch`, `decayed` afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub decayed: f64,
    pub drop_epoch: Option<usize>,
}

impl LrSchedule {
    /// Drops at `round(fraction · epochs)`; a fraction of 1 or more never drops.
    pub fn with_fraction(initial: f64, decayed: f64, epochs: usize, fraction: f64) -> Self {
        let drop_epoch = (fraction < 1.0).then(|| (fraction * epochs as f64).round() as usize);
        Self {
            initial,
            decayed,
            drop_epoch,
        }
    }

    pub fn rate(&self, epoch: usize) -> f64 {
        match self.drop_epoch {
            Some(d) if epoch >= d => self.decayed,
            _ => self.initial,
        }
    }
}
