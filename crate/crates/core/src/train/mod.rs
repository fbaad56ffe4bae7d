//! Listwise losses, the weighted co-training objective, the optimization
//! loop, and checkpoint persistence.

mod checkpoint;
mod config;
mod loss;
mod optim;
mod step;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, NamedTensor, CHECKPOINT_VERSION};
pub use config::{OptimizerConfig, TrainConfig};
pub use loss::{combined_loss, listwise_loss, listwise_loss_with_grad};
pub use optim::Optimizer;
pub use step::{accumulate_gradients, StepLosses, StepOptions};
pub use trainer::{continue_training, train, train_model, EpochMetrics, TrainOutcome};
