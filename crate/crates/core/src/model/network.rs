use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{LtcsError, Result};
use crate::model::config::LtcsConfig;
use crate::model::data::QueryGroup;
use crate::nn::{EncoderStack, Linear, Mlp};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor2;

pub(crate) const INITIAL_PREFIX: &str = "initial.";
pub(crate) const RERANK_PREFIX: &str = "rerank.";

/// Pointwise scorer: a SmeLU MLP whose last hidden activation is the item
/// embedding, followed by a bias-free linear logit head.
#[derive(Debug, Clone)]
pub struct InitialRanker {
    pub trunk: Mlp,
    pub head: Linear,
}

/// Setwise scorer over the selected embeddings.
#[derive(Debug, Clone)]
pub struct Reranker {
    pub encoder: EncoderStack,
    pub mlp: Mlp,
    pub head: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialOutput<F> {
    pub logit: F,
    pub embedding: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankOutput<F> {
    pub context_embeddings: Tensor2<F>,
    pub logits: Vec<F>,
    pub attention_scores: u64,
}

/// Everything the ranker computes for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankerOutputs<F> {
    pub initial_logits: Vec<F>,
    pub embeddings: Tensor2<F>,
    pub top_k_indices: Vec<usize>,
    pub context_embeddings: Tensor2<F>,
    pub rerank_logits: Vec<F>,
    pub final_ranking: Vec<usize>,
    /// Number of initial-ranker evaluations (one per candidate).
    pub initial_forwards: u64,
    pub attention_scores: u64,
}

/// Model parameters plus the layer layout that reads them.
#[derive(Debug, Clone)]
pub struct LtcsModel<F> {
    pub(crate) config: LtcsConfig,
    pub(crate) params: ParamStore<F>,
    pub(crate) initial: InitialRanker,
    pub(crate) reranker: Reranker,
}

/// Indices of the `min(k, n)` largest logits, by logit descending then index ascending.
pub fn select_top_k<F: Real>(logits: &[F], k: usize) -> Vec<usize> {
    let mut idx = sorted_order(logits);
    idx.truncate(k.min(logits.len()));
    idx
}

/// All indices by logit descending then index ascending.
pub(crate) fn sorted_order<F: Real>(logits: &[F]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].as_f64().total_cmp(&logits[a].as_f64()).then(a.cmp(&b)));
    idx
}

/// Re-ranked block followed by the tail in initial order.
///
/// `initial_order` is the full initial ranking, whose first
/// `rerank_logits.len()` entries are the re-ranked set. Equal re-rank logits
/// keep their initial order.
pub fn final_ranking<F: Real>(initial_order: &[usize], rerank_logits: &[F]) -> Vec<usize> {
    let m = rerank_logits.len();
    let mut block: Vec<usize> = (0..m).collect();
    block.sort_by(|&a, &b| rerank_logits[b].as_f64().total_cmp(&rerank_logits[a].as_f64()).then(a.cmp(&b)));
    block
        .into_iter()
        .map(|p| initial_order[p])
        .chain(initial_order[m..].iter().copied())
        .collect()
}

impl<F: Real> LtcsModel<F> {
    /// Builds a freshly initialized model from `config.seed`.
    pub fn new(config: &LtcsConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut ps = ParamStore::new();
        let beta = config.smelu_beta;
        let d_e = config.embedding_dim();

        let trunk = Mlp::new(&mut ps, "initial.hidden", config.input_dim(), &config.initial_hidden_widths, beta, &mut rng)?;
        let head = Linear::new(&mut ps, "initial.head", d_e, 1, false, &mut rng)?;
        let initial = InitialRanker { trunk, head };

        let encoder = EncoderStack::new(
            &mut ps,
            "rerank.encoder",
            config.encoder_layers,
            d_e,
            config.attention_heads,
            config.ff_width(),
            beta,
            config.layer_norm_eps,
            &mut rng,
        )?;
        let mlp = Mlp::new(&mut ps, "rerank.hidden", 2 * d_e, &config.rerank_hidden_widths, beta, &mut rng)?;
        let head_in = config.rerank_hidden_widths.last().copied().unwrap_or(2 * d_e);
        let rhead = Linear::new(&mut ps, "rerank.head", head_in, 1, false, &mut rng)?;
        let reranker = Reranker { encoder, mlp, head: rhead };

        Ok(LtcsModel { config: config.clone(), params: ps, initial, reranker })
    }

    pub fn config(&self) -> &LtcsConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn initial_ranker(&self) -> &InitialRanker {
        &self.initial
    }

    pub fn reranker(&self) -> &Reranker {
        &self.reranker
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.embedding_dim()
    }

    pub fn is_initial_param(&self, id: ParamId) -> bool {
        self.params.name(id).starts_with(INITIAL_PREFIX)
    }

    pub fn is_rerank_param(&self, id: ParamId) -> bool {
        self.params.name(id).starts_with(RERANK_PREFIX)
    }

    pub fn initial_param_ids(&self) -> Vec<ParamId> {
        self.params.ids().into_iter().filter(|&id| self.is_initial_param(id)).collect()
    }

    pub fn rerank_param_ids(&self) -> Vec<ParamId> {
        self.params.ids().into_iter().filter(|&id| self.is_rerank_param(id)).collect()
    }

    /// Replaces every re-ranker parameter with a fresh initialization drawn from `seed`.
    pub fn reinit_reranker(&mut self, seed: u64) -> Result<()> {
        let mut cfg = self.config.clone();
        cfg.seed = seed;
        let fresh = LtcsModel::<F>::new(&cfg)?;
        for id in self.rerank_param_ids() {
            let name = self.params.name(id).to_string();
            let src = fresh.params.id(&name).expect("same architecture");
            *self.params.value_mut(id) = fresh.params.value(src).clone();
        }
        Ok(())
    }

    /// Sets the re-ranker's output weights to zero so every re-rank logit is
    /// equal and the final ranking falls back to the initial order.
    pub fn make_reranker_inert(&mut self) {
        let w = self.reranker.head.weight;
        self.params.value_mut(w).fill(F::zero());
    }

    pub(crate) fn input_matrix(&self, group: &QueryGroup) -> Tensor2<F> {
        let dq = self.config.query_feature_dim;
        let width = self.config.input_dim();
        let mut x = Tensor2::zeros(group.items.len(), width);
        for (r, item) in group.items.iter().enumerate() {
            let row = x.row_mut(r);
            for (o, &v) in row[..dq].iter_mut().zip(&group.query_features) {
                *o = F::from_f64(v);
            }
            for (o, &v) in row[dq..].iter_mut().zip(&item.features) {
                *o = F::from_f64(v);
            }
        }
        x
    }

    fn check_dims(&self, query: &[f64], item: &[f64]) -> Result<()> {
        if query.len() != self.config.query_feature_dim || item.len() != self.config.item_feature_dim {
            return Err(LtcsError::Config(format!(
                "feature dims ({}, {}) do not match configured ({}, {})",
                query.len(),
                item.len(),
                self.config.query_feature_dim,
                self.config.item_feature_dim
            )));
        }
        Ok(())
    }

    /// Scores one (query, item) pair.
    pub fn initial_forward(&self, query: &[f64], item: &[f64]) -> Result<InitialOutput<F>> {
        self.check_dims(query, item)?;
        let x = Tensor2::from_vec(1, query.len() + item.len(), query.iter().chain(item).map(|&v| F::from_f64(v)).collect())?;
        let emb = self.initial.trunk.forward(&self.params, &x);
        let logit = self.initial.head.forward(&self.params, &emb).data()[0];
        Ok(InitialOutput { logit, embedding: emb.into_data() })
    }

    /// Scores every candidate of `group`; returns logits and the `n x d_e` embeddings.
    pub fn initial_forward_batch(&self, group: &QueryGroup) -> Result<(Vec<F>, Tensor2<F>)> {
        group.validate(self.config.query_feature_dim, self.config.item_feature_dim, false)?;
        let x = self.input_matrix(group);
        let emb = self.initial.trunk.forward(&self.params, &x);
        let logits = self.initial.head.forward(&self.params, &emb).into_data();
        Ok((logits, emb))
    }

    /// Runs the encoder over `m` embeddings and scores each against its context.
    pub fn rerank_forward(&self, top_embeddings: &Tensor2<F>) -> Result<RerankOutput<F>> {
        let m = top_embeddings.rows();
        if m == 0 {
            return Err(LtcsError::InvalidArgument("rerank_forward needs at least one embedding".into()));
        }
        if top_embeddings.cols() != self.embedding_dim() {
            return Err(LtcsError::Config(format!(
                "embedding width {} does not match configured {}",
                top_embeddings.cols(),
                self.embedding_dim()
            )));
        }
        let context = self.reranker.encoder.forward(&self.params, top_embeddings)?;
        let joined = top_embeddings.hconcat(&context);
        let hidden = self.reranker.mlp.forward(&self.params, &joined);
        let logits = self.reranker.head.forward(&self.params, &hidden).into_data();
        Ok(RerankOutput {
            context_embeddings: context,
            logits,
            attention_scores: self.reranker.encoder.score_count(m),
        })
    }

    /// Initial scoring, top-K selection, re-ranking, and the final merge.
    pub fn full_forward(&self, group: &QueryGroup, k: usize) -> Result<RankerOutputs<F>> {
        if k == 0 {
            return Err(LtcsError::InvalidArgument("top_k must be >= 1".into()));
        }
        let (initial_logits, embeddings) = self.initial_forward_batch(group)?;
        let order = sorted_order(&initial_logits);
        let m = k.min(order.len());
        let top_k_indices = order[..m].to_vec();
        let top = embeddings.gather_rows(&top_k_indices);
        let rr = self.rerank_forward(&top)?;
        let final_ranking = final_ranking(&order, &rr.logits);
        Ok(RankerOutputs {
            initial_forwards: initial_logits.len() as u64,
            initial_logits,
            embeddings,
            top_k_indices,
            context_embeddings: rr.context_embeddings,
            rerank_logits: rr.logits,
            final_ranking,
            attention_scores: rr.attention_scores,
        })
    }

    /// Ranking by initial logits alone.
    pub fn initial_ranking(&self, group: &QueryGroup) -> Result<Vec<usize>> {
        let (logits, _) = self.initial_forward_batch(group)?;
        Ok(sorted_order(&logits))
    }
}
