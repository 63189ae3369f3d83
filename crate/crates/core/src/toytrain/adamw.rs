//! AdamW with decoupled weight decay and a warmup + cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub base_lr: f64,
    pub total_steps: usize,
    pub warmup_frac: f64,
}

impl Schedule {
    pub fn new(base_lr: f64, total_steps: usize) -> Self {
        Self { base_lr, total_steps, warmup_frac: 0.05 }
    }

    /// Linear ramp from 0 over the warmup steps, then cosine decay to 0.
    pub fn lr_at(&self, step: usize) -> f64 {
        let total = self.total_steps.max(1);
        let warm = ((self.warmup_frac * total as f64).round() as usize).min(total - 1);
        if step < warm {
            return self.base_lr * step as f64 / warm as f64;
        }
        let span = (total - warm).max(1) as f64;
        let progress = ((step - warm) as f64 / span).min(1.0);
        0.5 * self.base_lr * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Per-parameter decay switch; all on by default.
    decay: Vec<bool>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl AdamW {
    pub fn new(n_params: usize, weight_decay: f64) -> Self {
        Self { weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8, decay: vec![true; n_params], m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    /// Exempts the parameters in `ranges` from weight decay.
    pub fn without_decay(mut self, ranges: &[std::ops::Range<usize>]) -> Self {
        for r in ranges {
            for i in r.clone() {
                if let Some(slot) = self.decay.get_mut(i) {
                    *slot = false;
                }
            }
        }
        self
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    /// One update using the schedule's rate for the current step.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], schedule: &Schedule) -> Result<()> {
        let lr = schedule.lr_at(self.t);
        self.step_with_lr(params, grads, lr)
    }

    pub fn step_with_lr(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} slots, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (p, &g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let update = (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
            let wd = if self.decay[i] { self.weight_decay } else { 0.0 };
            *p -= lr * (update + wd * *p);
        }
        Ok(())
    }
}
