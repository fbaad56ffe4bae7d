use crate::error::{LtcsError, Result};
use crate::model::{LtcsModel, QueryGroup};
use crate::model::network::sorted_order;
use crate::real::Real;
use crate::tensor::Tensor2;
use crate::train::config::TrainConfig;
use crate::train::loss::listwise_loss_with_grad;

/// Per-group knobs of the training objective.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOptions {
    pub alpha: f64,
    pub top_k: usize,
    pub guided_topk: bool,
    pub initial_loss_on_top_k: bool,
    pub detach_embeddings: bool,
}

impl StepOptions {
    pub fn from_configs(top_k: usize, tc: &TrainConfig) -> Self {
        StepOptions {
            alpha: tc.alpha,
            top_k,
            guided_topk: tc.guided_topk,
            initial_loss_on_top_k: tc.initial_loss_on_top_k,
            detach_embeddings: tc.detach_embeddings,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub initial: f64,
    /// `None` when `alpha == 0`: the re-ranker is not evaluated at all.
    pub rerank: Option<f64>,
    pub combined: f64,
}

/// Forward pass, combined loss, and backward pass for one query group.
///
/// Gradients are added to the model's gradient buffers; the caller zeroes
/// them. The top-K selection uses the current initial logits and is not
/// differentiated; gradients reach the initial ranker through the selected
/// embeddings unless `detach_embeddings` is set.
pub fn accumulate_gradients<F: Real>(
    model: &mut LtcsModel<F>,
    group: &QueryGroup,
    opts: &StepOptions,
) -> Result<StepLosses> {
    if !(0.0..=1.0).contains(&opts.alpha) {
        return Err(LtcsError::Config(format!("alpha must lie in [0, 1], got {}", opts.alpha)));
    }
    if opts.top_k == 0 {
        return Err(LtcsError::Config("top_k must be >= 1".into()));
    }
    let cfg = &model.config;
    group.validate(cfg.query_feature_dim, cfg.item_feature_dim, false)?;
    let alpha = opts.alpha;
    let w_initial = F::from_f64(1.0 - alpha);
    let w_rerank = F::from_f64(alpha);
    let n = group.len();
    let d_e = model.embedding_dim();

    let x = model.input_matrix(group);
    let (emb, trunk_cache) = model.initial.trunk.forward_cached(&model.params, &x);
    let logits = model.initial.head.forward(&model.params, &emb).into_data();

    let order = sorted_order(&logits);
    let m = opts.top_k.min(n);
    let mut selected = order[..m].to_vec();
    if opts.guided_topk {
        if let Some(pos) = group.positives().next() {
            if !selected.contains(&pos) {
                selected[m - 1] = pos;
            }
        }
    }

    // Initial-ranker loss, over all candidates or over the selected list.
    let mut d_logits = Tensor2::<F>::zeros(n, 1);
    let loss_initial = if opts.initial_loss_on_top_k {
        let sl: Vec<F> = selected.iter().map(|&i| logits[i]).collect();
        let sy: Vec<u8> = selected.iter().map(|&i| group.labels[i]).collect();
        let (l, g) = listwise_loss_with_grad(&sl, &sy)?;
        for (&i, gi) in selected.iter().zip(g) {
            d_logits.data_mut()[i] = gi * w_initial;
        }
        l
    } else {
        let (l, g) = listwise_loss_with_grad(&logits, &group.labels)?;
        for (d, gi) in d_logits.data_mut().iter_mut().zip(g) {
            *d = gi * w_initial;
        }
        l
    };

    let mut d_emb = Tensor2::<F>::zeros(n, d_e);
    let mut loss_rerank = None;
    if alpha > 0.0 {
        let top = emb.gather_rows(&selected);
        let rr = &model.reranker;
        let (context, enc_cache) = rr.encoder.forward_cached(&model.params, &top)?;
        let joined = top.hconcat(&context);
        let (hidden, mlp_cache) = rr.mlp.forward_cached(&model.params, &joined);
        let r_logits = rr.head.forward(&model.params, &hidden).into_data();
        let sy: Vec<u8> = selected.iter().map(|&i| group.labels[i]).collect();
        let (l, g) = listwise_loss_with_grad(&r_logits, &sy)?;
        loss_rerank = Some(l.as_f64());

        let d_rlogits = Tensor2::from_vec(m, 1, g.into_iter().map(|gi| gi * w_rerank).collect())?;
        let rr = model.reranker.clone();
        let ps = &mut model.params;
        let d_hidden = rr.head.backward(ps, &hidden, &d_rlogits, true).unwrap();
        let d_joined = rr.mlp.backward(ps, &mlp_cache, &d_hidden, true).unwrap();
        let (mut d_top, d_context) = d_joined.hsplit(d_e);
        let d_top_enc = rr.encoder.backward(ps, &enc_cache, &d_context);
        d_top.add_assign(&d_top_enc);
        if !opts.detach_embeddings {
            for (r, &i) in selected.iter().enumerate() {
                for (o, &g) in d_emb.row_mut(i).iter_mut().zip(d_top.row(r)) {
                    *o += g;
                }
            }
        }
    }

    let initial = model.initial.clone();
    let ps = &mut model.params;
    let d_emb_head = initial.head.backward(ps, &emb, &d_logits, true).unwrap();
    d_emb.add_assign(&d_emb_head);
    let trunk_needed = alpha < 1.0 || !opts.detach_embeddings;
    if trunk_needed {
        initial.trunk.backward(ps, &trunk_cache, &d_emb, false);
    }

    let li = loss_initial.as_f64();
    let combined = (1.0 - alpha) * li + alpha * loss_rerank.unwrap_or(0.0);
    if !combined.is_finite() {
        return Err(LtcsError::Numerical(format!("non-finite loss on query {}", group.query_id)));
    }
    Ok(StepLosses { initial: li, rerank: loss_rerank, combined })
}
