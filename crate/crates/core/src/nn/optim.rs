use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Update rule applied after each backward pass. Weight decay is decoupled
/// from the gradient in both variants: `p -= lr · wd · p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    AdamW { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adamw() -> Self {
        OptimizerKind::AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    weight_decay: f64,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, weight_decay: f64) -> Self {
        Self {
            kind,
            weight_decay,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. `params` and `grads` must pair up slice by slice
    /// and keep the same order on every call.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        if self.moments.is_empty() {
            self.moments = grads.iter().map(|g| (vec![0.0; g.len()], vec![0.0; g.len()])).collect();
        }
        let decay = 1.0 - lr * self.weight_decay;
        for (idx, (p, g)) in params.into_iter().zip(grads).enumerate() {
            if p.len() != g.len() || self.moments[idx].0.len() != g.len() {
                return Err(Error::ShapeMismatch(format!("tensor {idx} changed size")));
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, dw) in p.iter_mut().zip(g.iter()) {
                        *w = *w * decay - lr * dw;
                    }
                }
                OptimizerKind::AdamW { beta1, beta2, eps } => {
                    let bc1 = 1.0 - beta1.powi(self.step as i32);
                    let bc2 = 1.0 - beta2.powi(self.step as i32);
                    let (m, v) = &mut self.moments[idx];
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let mhat = m[i] / bc1;
                        let vhat = v[i] / bc2;
                        p[i] = p[i] * decay - lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Linear warmup from `min_lr` to `max_lr`, then cosine decay to `final_lr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneCycle {
    pub min_lr: f64,
    pub max_lr: f64,
    pub warmup_fraction: f64,
    /// Rate reached at the end of the annealing phase.
    pub final_lr: f64,
}

impl Default for OneCycle {
    fn default() -> Self {
        Self {
            min_lr: 5e-4,
            max_lr: 5e-3,
            warmup_fraction: 0.25,
            final_lr: 2e-5,
        }
    }
}

impl OneCycle {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_lr > 0.0 && self.max_lr >= self.min_lr) {
            return Err(Error::InvalidConfig(format!(
                "learning rates must satisfy 0 < min ({}) <= max ({})",
                self.min_lr, self.max_lr
            )));
        }
        if !(self.final_lr > 0.0 && self.final_lr <= self.max_lr) {
            return Err(Error::InvalidConfig(format!(
                "final learning rate {} must be in (0, max]",
                self.final_lr
            )));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidConfig("warmup fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Learning rate at training progress `t` in `[0, 1]`.
    pub fn lr(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        if t < self.warmup_fraction {
            self.min_lr + (self.max_lr - self.min_lr) * t / self.warmup_fraction
        } else {
            let u = (t - self.warmup_fraction) / (1.0 - self.warmup_fraction);
            self.final_lr + (self.max_lr - self.final_lr) * 0.5 * (1.0 + (PI * u).cos())
        }
    }
}
