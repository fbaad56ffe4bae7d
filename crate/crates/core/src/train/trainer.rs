use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{LtcsError, Result};
use crate::eval::evaluate_model;
use crate::model::{LtcsConfig, LtcsModel, QueryGroup};
use crate::parallel::Execution;
use crate::real::{Precision, Real};
use crate::rng::stream_rng;
use crate::train::checkpoint::Checkpoint;
use crate::train::config::TrainConfig;
use crate::train::optim::Optimizer;
use crate::train::step::{accumulate_gradients, StepOptions};

/// Training metrics of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_initial_loss: f64,
    pub mean_rerank_loss: Option<f64>,
    pub eval_ndcg_end_to_end: Option<f64>,
    pub eval_ndcg_initial_only: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochMetrics>,
}

/// Trains a fresh model and packages it as a checkpoint.
///
/// The model is initialized from `ltcs.seed` and the shuffle schedule is
/// derived from `tc.seed`, so the result is a pure function of the inputs.
/// With `alpha == 0` the re-ranker is never trained, so it is made inert and
/// the end-to-end ranking equals the initial ranking.
pub fn train(
    dataset: &[QueryGroup],
    eval_set: Option<&[QueryGroup]>,
    ltcs: &LtcsConfig,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut ltcs = ltcs.clone();
    ltcs.alpha = tc.alpha;
    match ltcs.precision {
        Precision::F32 => train_fresh::<f32>(dataset, eval_set, &ltcs, tc),
        Precision::F64 => train_fresh::<f64>(dataset, eval_set, &ltcs, tc),
    }
}

fn train_fresh<F: Real>(
    dataset: &[QueryGroup],
    eval_set: Option<&[QueryGroup]>,
    ltcs: &LtcsConfig,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut model = LtcsModel::<F>::new(ltcs)?;
    if tc.alpha == 0.0 {
        model.make_reranker_inert();
    }
    let history = train_model(&mut model, dataset, eval_set, tc)?;
    Ok(TrainOutcome { checkpoint: Checkpoint::from_model(&model, tc, history.clone()), history })
}

/// Continues training the model stored in `checkpoint` under `tc`.
pub fn continue_training(
    checkpoint: &Checkpoint,
    dataset: &[QueryGroup],
    eval_set: Option<&[QueryGroup]>,
    tc: &TrainConfig,
    prepare: impl Fn(&mut dyn PrepareModel) -> Result<()>,
) -> Result<TrainOutcome> {
    match checkpoint.precision() {
        Precision::F32 => continue_typed::<f32>(checkpoint, dataset, eval_set, tc, prepare),
        Precision::F64 => continue_typed::<f64>(checkpoint, dataset, eval_set, tc, prepare),
    }
}

/// Precision-erased hooks applied to a loaded model before training resumes.
pub trait PrepareModel {
    fn reinit_reranker(&mut self, seed: u64) -> Result<()>;
}

impl<F: Real> PrepareModel for LtcsModel<F> {
    fn reinit_reranker(&mut self, seed: u64) -> Result<()> {
        LtcsModel::reinit_reranker(self, seed)
    }
}

fn continue_typed<F: Real>(
    checkpoint: &Checkpoint,
    dataset: &[QueryGroup],
    eval_set: Option<&[QueryGroup]>,
    tc: &TrainConfig,
    prepare: impl Fn(&mut dyn PrepareModel) -> Result<()>,
) -> Result<TrainOutcome> {
    let mut model = checkpoint.to_model::<F>()?;
    prepare(&mut model)?;
    model.config.alpha = tc.alpha;
    let mut history = checkpoint.history.clone();
    let offset = history.len();
    let mut new = train_model(&mut model, dataset, eval_set, tc)?;
    for m in &mut new {
        m.epoch += offset;
    }
    history.extend(new);
    Ok(TrainOutcome { checkpoint: Checkpoint::from_model(&model, tc, history.clone()), history })
}

/// The optimization loop: one shuffled pass per epoch, one optimizer step
/// every `groups_per_step` query groups.
pub fn train_model<F: Real>(
    model: &mut LtcsModel<F>,
    dataset: &[QueryGroup],
    eval_set: Option<&[QueryGroup]>,
    tc: &TrainConfig,
) -> Result<Vec<EpochMetrics>> {
    tc.validate()?;
    if dataset.is_empty() {
        return Err(LtcsError::Data("training dataset is empty".into()));
    }
    let cfg = model.config().clone();
    for g in dataset {
        g.validate(cfg.query_feature_dim, cfg.item_feature_dim, true)?;
    }
    let trainable = if tc.freeze_initial { model.rerank_param_ids() } else { model.params().ids() };
    let mut optimizer = Optimizer::new(tc, model.params(), trainable);
    let opts = StepOptions::from_configs(cfg.top_k, tc);
    let mut history = Vec::with_capacity(tc.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut step = 0u64;

    for epoch in 0..tc.epochs {
        order.sort_unstable();
        order.shuffle(&mut stream_rng(tc.seed, epoch as u64));
        model.params_mut().zero_grads();
        let (mut total, mut total_initial, mut total_rerank) = (0.0, 0.0, 0.0);
        let mut pending = 0usize;
        for &gi in &order {
            let group = &dataset[gi];
            let losses = accumulate_gradients(model, group, &opts).map_err(|e| match e {
                LtcsError::Numerical(m) => LtcsError::Numerical(format!("{m} (epoch {epoch}, step {step})")),
                other => other,
            })?;
            total += losses.combined;
            total_initial += losses.initial;
            total_rerank += losses.rerank.unwrap_or(0.0);
            pending += 1;
            if pending == tc.groups_per_step {
                optimizer.step(model.params_mut(), 1.0 / pending as f64);
                model.params_mut().zero_grads();
                pending = 0;
                step += 1;
            }
        }
        if pending > 0 {
            optimizer.step(model.params_mut(), 1.0 / pending as f64);
            model.params_mut().zero_grads();
            step += 1;
        }
        if !model.params().all_finite() {
            return Err(LtcsError::Numerical(format!("parameters diverged after epoch {epoch} (step {step})")));
        }
        let n = dataset.len() as f64;
        let mut metrics = EpochMetrics {
            epoch: epoch + 1,
            mean_loss: total / n,
            mean_initial_loss: total_initial / n,
            mean_rerank_loss: (tc.alpha > 0.0).then_some(total_rerank / n),
            eval_ndcg_end_to_end: None,
            eval_ndcg_initial_only: None,
        };
        if let Some(eval) = eval_set {
            if tc.eval_every > 0 && ((epoch + 1) % tc.eval_every == 0 || epoch + 1 == tc.epochs) {
                let report = evaluate_model(model, eval, Execution::Sequential)?;
                metrics.eval_ndcg_end_to_end = Some(report.ndcg_end_to_end);
                metrics.eval_ndcg_initial_only = Some(report.ndcg_initial_only);
            }
        }
        history.push(metrics);
    }
    Ok(history)
}
