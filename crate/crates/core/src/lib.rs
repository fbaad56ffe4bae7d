//! Co-trained two-stage ranking: a pointwise MLP scores every candidate and
//! emits an embedding; a setwise transformer re-ranks the top K of those
//! embeddings. Both are trained jointly under one listwise objective.
//!
//! The crate also contains a synthetic comparison-shopping world for
//! experiments, evaluation and sweep drivers, and an in-process leaf/master
//! serving simulation with a binary wire format.

pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod parallel;
pub mod params;
pub mod real;
pub mod rng;
pub mod serving;
pub mod tensor;
pub mod train;
pub mod world;

pub use error::{ErrorCategory, LtcsError, Result};
pub use model::{LtcsConfig, LtcsModel, QueryGroup};
pub use parallel::Execution;
pub use real::{Precision, Real};
pub use train::{Checkpoint, TrainConfig};
