use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::metrics::ndcg;
use crate::model::{LtcsModel, QueryGroup};
use crate::parallel::{self, Execution};
use crate::real::{Precision, Real};
use crate::train::Checkpoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryNdcg {
    pub query_id: u64,
    pub end_to_end: f64,
    pub initial_only: f64,
}

/// Mean NDCG of the full two-stage ranking and of the initial ranking alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ndcg_end_to_end: f64,
    pub ndcg_initial_only: f64,
    pub per_query: Vec<QueryNdcg>,
    pub seed: u64,
    pub config_fingerprint: String,
}

/// Evaluates a checkpoint without modifying it.
pub fn evaluate_system(checkpoint: &Checkpoint, dataset: &[QueryGroup]) -> Result<EvalReport> {
    evaluate_system_with(checkpoint, dataset, Execution::default())
}

pub fn evaluate_system_with(checkpoint: &Checkpoint, dataset: &[QueryGroup], exec: Execution) -> Result<EvalReport> {
    let mut report = match checkpoint.precision() {
        Precision::F32 => evaluate_model(&checkpoint.to_model::<f32>()?, dataset, exec)?,
        Precision::F64 => evaluate_model(&checkpoint.to_model::<f64>()?, dataset, exec)?,
    };
    report.seed = checkpoint.seed;
    report.config_fingerprint = checkpoint.fingerprint()?;
    Ok(report)
}

/// Runs `full_forward` on every query (no guided top-K) and scores both rankings.
pub fn evaluate_model<F: Real>(model: &LtcsModel<F>, dataset: &[QueryGroup], exec: Execution) -> Result<EvalReport> {
    let k = model.config().top_k;
    let per_query = parallel::try_map(dataset, exec, |g| {
        let out = model.full_forward(g, k)?;
        let initial = crate::model::network::sorted_order(&out.initial_logits);
        Ok(QueryNdcg {
            query_id: g.query_id,
            end_to_end: ndcg(&out.final_ranking, &g.labels)?,
            initial_only: ndcg(&initial, &g.labels)?,
        })
    })?;
    let n = per_query.len().max(1) as f64;
    Ok(EvalReport {
        ndcg_end_to_end: per_query.iter().map(|q| q.end_to_end).sum::<f64>() / n,
        ndcg_initial_only: per_query.iter().map(|q| q.initial_only).sum::<f64>() / n,
        per_query,
        seed: model.config().seed,
        config_fingerprint: String::new(),
    })
}
