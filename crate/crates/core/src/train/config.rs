use serde::{Deserialize, Serialize};

use crate::error::{LtcsError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Weight of the re-ranker loss.
    pub alpha: f64,
    /// Force the positive into the re-ranked set during training.
    #[serde(default = "yes")]
    pub guided_topk: bool,
    /// Restrict the initial-ranker loss to the selected top-K list.
    #[serde(default)]
    pub initial_loss_on_top_k: bool,
    /// Stop re-ranker gradients at the embeddings.
    #[serde(default)]
    pub detach_embeddings: bool,
    /// Leave initial-ranker parameters untouched.
    #[serde(default)]
    pub freeze_initial: bool,
    /// Query groups accumulated per optimizer step.
    #[serde(default = "one")]
    pub groups_per_step: usize,
    /// Linear learning-rate warmup length in optimizer steps.
    #[serde(default)]
    pub warmup_steps: usize,
    /// Evaluate every this many epochs when an eval set is given (0 = never).
    #[serde(default)]
    pub eval_every: usize,
    pub seed: u64,
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 4,
            learning_rate: 1e-3,
            optimizer: OptimizerConfig::default(),
            alpha: 0.5,
            guided_topk: true,
            initial_loss_on_top_k: false,
            detach_embeddings: false,
            freeze_initial: false,
            groups_per_step: 1,
            warmup_steps: 0,
            eval_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings used for the desk-scale experiments on the default world:
    /// plain SGD over 16-group mini-batches, so `alpha` scales each head's
    /// effective step size.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 6,
            learning_rate: 0.05,
            optimizer: OptimizerConfig::Sgd,
            groups_per_step: 16,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(LtcsError::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(LtcsError::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.groups_per_step == 0 {
            return Err(LtcsError::Config("groups_per_step must be >= 1".into()));
        }
        if let OptimizerConfig::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(LtcsError::Config("adam betas must lie in [0, 1) and eps > 0".into()));
            }
        }
        Ok(())
    }
}
