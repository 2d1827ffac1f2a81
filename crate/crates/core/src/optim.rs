//! Adam, the step-decay schedule and patience-based early stopping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta0: f64,
    pub lambda: f64,
    pub decay_period: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta0: 0.001,
            lambda: 0.5,
            decay_period: 20,
            patience: 100,
            batch_size: 32,
            max_epochs: 500,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0) {
            return Err(Error::Config("eta0 must be > 0".into()));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Config("lambda must lie in (0, 1]".into()));
        }
        if self.decay_period == 0 || self.batch_size == 0 {
            return Err(Error::Config("decay period and batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// `eta_e = eta0 * lambda^floor(e / T)`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.eta0 * cfg.lambda.powi((epoch / cfg.decay_period) as i32)
}

/// Adam over the canonical flattening of a [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub state: OptimizerState,
}

impl Adam {
    pub fn new(params: &ModelParams, cfg: &TrainConfig) -> Self {
        let n = params.parameter_count();
        Self {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            state: OptimizerState { step: 0, first_moment: vec![0.0; n], second_moment: vec![0.0; n] },
        }
    }

    pub fn with_state(cfg: &TrainConfig, state: OptimizerState) -> Self {
        Self { beta1: cfg.beta1, beta2: cfg.beta2, epsilon: cfg.epsilon, state }
    }

    /// One update. Parameters are rounded to `f32` afterwards so that every
    /// value survives the parameter file bit-for-bit.
    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams, lr: f64) {
        self.state.step += 1;
        let t = self.state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut offset = 0;
        for (p, g) in params.tensors_mut().into_iter().zip(grad.tensors()) {
            let m = &mut self.state.first_moment[offset..offset + p.len()];
            let v = &mut self.state.second_moment[offset..offset + p.len()];
            for (((w, &gi), mi), vi) in p.data.iter_mut().zip(&g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w = (*w - lr * m_hat / (v_hat.sqrt() + self.epsilon)) as f32 as f64;
            }
            offset += p.len();
        }
    }
}

/// Stops once `patience` consecutive epochs fail to improve on the best loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0 }
    }

    /// Records an epoch's validation loss. Returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> (bool, bool) {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            return (true, false);
        }
        (false, epoch >= self.best_epoch + self.patience)
    }
}
