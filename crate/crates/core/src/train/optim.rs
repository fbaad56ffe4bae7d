use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor2;
use crate::train::config::{OptimizerConfig, TrainConfig};

/// Plain SGD or Adam over every non-frozen parameter of a store.
#[derive(Debug, Clone)]
pub struct Optimizer<F> {
    kind: OptimizerConfig,
    learning_rate: f64,
    warmup_steps: usize,
    step: u64,
    ids: Vec<ParamId>,
    first_moment: Vec<Tensor2<F>>,
    second_moment: Vec<Tensor2<F>>,
}

impl<F: Real> Optimizer<F> {
    /// `trainable` lists the parameters that may move; everything else stays bit-equal.
    pub fn new(config: &TrainConfig, params: &ParamStore<F>, trainable: Vec<ParamId>) -> Self {
        let zeros = |id: ParamId| {
            let (r, c) = params.value(id).shape();
            Tensor2::zeros(r, c)
        };
        let (first_moment, second_moment) = match config.optimizer {
            OptimizerConfig::Sgd => (Vec::new(), Vec::new()),
            OptimizerConfig::Adam { .. } => {
                (trainable.iter().map(|&id| zeros(id)).collect(), trainable.iter().map(|&id| zeros(id)).collect())
            }
        };
        Optimizer {
            kind: config.optimizer.clone(),
            learning_rate: config.learning_rate,
            warmup_steps: config.warmup_steps,
            step: 0,
            ids: trainable,
            first_moment,
            second_moment,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    fn current_lr(&self) -> f64 {
        if self.warmup_steps > 0 && (self.step as usize) < self.warmup_steps {
            self.learning_rate * (self.step + 1) as f64 / self.warmup_steps as f64
        } else {
            self.learning_rate
        }
    }

    /// Applies one update using the accumulated gradients scaled by `grad_scale`.
    pub fn step(&mut self, params: &mut ParamStore<F>, grad_scale: f64) {
        let lr = self.current_lr();
        self.step += 1;
        let scale = F::from_f64(grad_scale);
        match self.kind {
            OptimizerConfig::Sgd => {
                let lr = F::from_f64(lr);
                for &id in &self.ids {
                    let (value, grad) = params.pair_mut(id);
                    for (w, &g) in value.data_mut().iter_mut().zip(grad.data()) {
                        *w -= lr * g * scale;
                    }
                }
            }
            OptimizerConfig::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                let step_size = F::from_f64(lr / bc1);
                let inv_bc2_sqrt = F::from_f64(1.0 / bc2.sqrt());
                let (b1, b2, e) = (F::from_f64(beta1), F::from_f64(beta2), F::from_f64(eps));
                let one = F::one();
                for (slot, &id) in self.ids.iter().enumerate() {
                    let (value, grad) = params.pair_mut(id);
                    let m = self.first_moment[slot].data_mut();
                    let v = self.second_moment[slot].data_mut();
                    for (((w, &g), mi), vi) in value.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
                        let g = g * scale;
                        *mi = b1 * *mi + (one - b1) * g;
                        *vi = b2 * *vi + (one - b2) * g * g;
                        *w -= step_size * *mi / (vi.sqrt() * inv_bc2_sqrt + e);
                    }
                }
            }
        }
    }
}
