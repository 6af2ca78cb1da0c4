//! SGD and Adam with ℓ2 weight decay and a step-decay learning rate.
//!
//! Optimizers only see `(name, values)` parameter slots and matching
//! gradient vectors, so exact gradients and randomized estimates are
//! consumed identically.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Multiply the learning rate by `factor` every `interval` iterations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDecay {
    pub factor: f64,
    pub interval: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub l2: f64,
    pub decay: Option<StepDecay>,
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self { kind: OptimizerKind::adam(), lr, l2: 0.0, decay: None }
    }

    pub fn sgd(lr: f64) -> Self {
        Self { kind: OptimizerKind::Sgd, lr, l2: 0.0, decay: None }
    }

    pub fn with_l2(mut self, l2: f64) -> Self {
        self.l2 = l2;
        self
    }

    pub fn with_decay(mut self, factor: f64, interval: u64) -> Self {
        self.decay = Some(StepDecay { factor, interval });
        self
    }
}

/// A named, mutable block of parameters.
pub struct ParamSlot<'a> {
    pub name: &'a str,
    pub values: &'a mut [f64],
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    iteration: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self { config, iteration: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Number of updates applied so far.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Learning rate used by the update at (zero-based) `iteration`. Decay
    /// applies at positive multiples of the interval, before that update.
    pub fn learning_rate_at(&self, iteration: u64) -> f64 {
        match self.config.decay {
            Some(StepDecay { factor, interval }) if interval > 0 => {
                self.config.lr * factor.powi((iteration / interval) as i32)
            }
            _ => self.config.lr,
        }
    }

    /// Apply one update. Parameters are left untouched if any gradient entry
    /// is non-finite.
    pub fn step(&mut self, params: Vec<ParamSlot<'_>>, grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameter blocks, {} gradient blocks",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.values.len() != g.len() {
                return Err(Error::DimensionMismatch(format!(
                    "block `{}` has {} values, gradient has {}",
                    p.name,
                    p.values.len(),
                    g.len()
                )));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient(p.name.to_string()));
            }
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        let lr = self.learning_rate_at(self.iteration);
        let l2 = self.config.l2;
        let t = self.iteration + 1;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    for (x, &gi) in p.values.iter_mut().zip(g) {
                        *x -= lr * (gi + l2 * *x);
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(t as i32);
                let bc2 = 1.0 - beta2.powi(t as i32);
                for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    for (((x, &gi), mi), vi) in p.values.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        let gi = gi + l2 * *x;
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        let mhat = *mi / bc1;
                        let vhat = *vi / bc2;
                        *x -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        self.iteration += 1;
        Ok(())
    }
}
