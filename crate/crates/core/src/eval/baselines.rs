use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{LtcsConfig, QueryGroup};
use crate::rng::derive_seed;
use crate::train::{continue_training, train, Checkpoint, TrainConfig, TrainOutcome};

/// Comparison systems for the co-trained ranker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Initial ranker alone (`alpha = 0`); the re-ranker is inert.
    PointwiseOnly,
    /// Only the re-ranker loss (`alpha = 1`).
    RerankOnly,
    /// Initial ranker trained alone, then frozen while a fresh re-ranker is
    /// trained on its detached embeddings.
    IndependentTwoStage,
}

pub fn train_baseline(
    kind: BaselineKind,
    dataset: &[QueryGroup],
    eval_set: Option<&[QueryGroup]>,
    ltcs: &LtcsConfig,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    match kind {
        BaselineKind::PointwiseOnly => train(dataset, eval_set, ltcs, &TrainConfig { alpha: 0.0, ..tc.clone() }),
        BaselineKind::RerankOnly => train(dataset, eval_set, ltcs, &TrainConfig { alpha: 1.0, ..tc.clone() }),
        BaselineKind::IndependentTwoStage => {
            let stage1 = train(dataset, eval_set, ltcs, &TrainConfig { alpha: 0.0, ..tc.clone() })?;
            train_independent_second_stage(&stage1.checkpoint, dataset, eval_set, tc)
        }
    }
}

/// Second stage of [`BaselineKind::IndependentTwoStage`], starting from a
/// trained pointwise checkpoint.
pub fn train_independent_second_stage(
    pointwise: &Checkpoint,
    dataset: &[QueryGroup],
    eval_set: Option<&[QueryGroup]>,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    let stage2 = TrainConfig { alpha: 1.0, freeze_initial: true, detach_embeddings: true, ..tc.clone() };
    let seed = derive_seed(pointwise.ltcs_config.seed, 0x5EC0_0D57);
    continue_training(pointwise, dataset, eval_set, &stage2, |m| m.reinit_reranker(seed))
}
