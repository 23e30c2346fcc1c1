use serde::{Deserialize, Serialize};

use super::Architecture;
use crate::distribution::DEFAULT_CLIP_FLOOR;
use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// How the EM trainers refresh the missingness mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismUpdate {
    /// Exponential moving average of per-batch class masses.
    PerBatch,
    /// Closed form from the class masses accumulated over the epoch.
    PerEpoch,
}

/// Everything a training run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Mini-batch size; 0 means full batch.
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Confidence threshold τ of the pseudo-label operator.
    pub confidence_threshold: f64,
    /// Supervised epochs on labeled data before EM starts.
    pub warmup_epochs: usize,
    /// EMA coefficient of the running `P(Y)` in the logit-adjusted loss.
    pub prior_momentum: f64,
    /// EMA coefficient of the per-batch class masses.
    pub mechanism_momentum: f64,
    pub mechanism_update: MechanismUpdate,
    /// EMA coefficient of the per-batch doubly robust `P(Y|A=0)` in the
    /// batch-update trainer.
    pub dr_momentum: f64,
    /// Learning rate for the mechanism logits in direct likelihood training.
    pub mechanism_learning_rate: f64,
    pub clip_floor: f64,
    pub sigma_weak: f64,
    pub sigma_strong: f64,
    /// Gradient steps per M-step when training full batch.
    pub full_batch_inner_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::Linear,
            hidden: 16,
            learning_rate: 1e-2,
            epochs: 30,
            batch_size: 128,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            seed: 0,
            confidence_threshold: 0.95,
            warmup_epochs: 30,
            prior_momentum: 0.99,
            mechanism_momentum: 0.99,
            mechanism_update: MechanismUpdate::PerBatch,
            dr_momentum: 0.99,
            mechanism_learning_rate: 1e-3,
            clip_floor: DEFAULT_CLIP_FLOOR,
            sigma_weak: 0.1,
            sigma_strong: 0.5,
            full_batch_inner_steps: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(domain("learning rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(domain("confidence threshold must lie in [0, 1]"));
        }
        for (name, m) in [
            ("prior momentum", self.prior_momentum),
            ("mechanism momentum", self.mechanism_momentum),
            ("dr momentum", self.dr_momentum),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(0.0..=1.0).contains(&m) {
                return Err(domain(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.clip_floor > 0.0 && self.clip_floor <= 1.0) {
            return Err(domain("clip floor must lie in (0, 1]"));
        }
        if self.architecture == Architecture::Mlp1 && self.hidden == 0 {
            return Err(domain("mlp1 needs a positive hidden width"));
        }
        Ok(())
    }
}

/// SGD or Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(cfg: &TrainConfig, num_params: usize) -> Self {
        Self::with_rate(cfg, cfg.learning_rate, num_params)
    }

    pub fn with_rate(cfg: &TrainConfig, learning_rate: f64, num_params: usize) -> Self {
        Self {
            kind: cfg.optimizer,
            learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One descent step on `params` along `grad` (L2 weight decay added).
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        self.step += 1;
        let wd = self.weight_decay;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.learning_rate * (g + wd * *p);
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i] + wd * params[i];
                    self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                    self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                    let mhat = self.m[i] / bc1;
                    let vhat = self.v[i] / bc2;
                    params[i] -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
                }
            }
        }
    }
}
