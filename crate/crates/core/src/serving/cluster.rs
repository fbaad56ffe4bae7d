use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::wire::{RankedRecord, RerankResult, ScoreRequest, ScoreResponse, ScoredRecord, TailRecord, WireMessage};
use crate::error::{LtcsError, Result};
use crate::model::{final_ranking, select_top_k, LtcsModel, QueryGroup};
use crate::real::Real;
use crate::rng::derive_seed;
use crate::tensor::Tensor2;

/// Assignment of a query's candidates to leaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Partitioning {
    /// Candidate `i` goes to leaf `i mod shards`.
    RoundRobin,
    /// Hash of `(seed, query_id, item_id)`.
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Any unavailable leaf fails the query.
    #[default]
    Fail,
    /// Rank whatever the available leaves returned.
    Degrade,
}

impl std::str::FromStr for FailurePolicy {
    type Err = LtcsError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fail" => Ok(FailurePolicy::Fail),
            "degrade" => Ok(FailurePolicy::Degrade),
            other => Err(LtcsError::InvalidArgument(format!("unknown failure policy {other:?} (fail|degrade)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafCounters {
    pub requests: u64,
    pub embedding_computations: u64,
    pub bytes_sent: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MasterCounters {
    pub queries: u64,
    /// Initial-ranker evaluations on the master. The master has no code path
    /// that scores candidates, so this stays 0.
    pub initial_forwards: u64,
    pub attention_scores: u64,
    pub bytes_received: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub leaves: Vec<LeafCounters>,
    pub master: MasterCounters,
}

/// Result of serving one query.
#[derive(Debug, Clone, PartialEq)]
pub struct ServeOutcome {
    pub query_id: u64,
    /// Final order as candidate indices into the served group.
    pub ranking: Vec<usize>,
    pub result: RerankResult,
    pub missing_shards: Vec<usize>,
    pub leaf_embedding_computations: u64,
    pub master_initial_forwards: u64,
    pub attention_scores: u64,
    pub bytes_on_wire: u64,
}

struct Leaf<F> {
    model: Arc<LtcsModel<F>>,
    counters: LeafCounters,
    available: bool,
}

impl<F: Real> Leaf<F> {
    /// Scores every item of the request and keeps embeddings for the local top-K.
    fn handle(&mut self, frame: &[u8], k: usize) -> Result<Vec<u8>> {
        let req = match WireMessage::decode(frame)? {
            WireMessage::ScoreRequest(r) => r,
            other => return Err(LtcsError::Protocol(format!("leaf got unexpected {other:?}"))),
        };
        self.counters.requests += 1;
        let group = QueryGroup {
            query_id: req.query_id,
            query_features: req.query_features,
            labels: vec![0; req.items.len()],
            items: req.items,
        };
        let d_e = self.model.embedding_dim();
        let (scored, tail) = if group.items.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            let (logits, emb) = self.model.initial_forward_batch(&group)?;
            self.counters.embedding_computations += logits.len() as u64;
            let order = select_top_k(&logits, logits.len());
            let m = k.min(order.len());
            let scored = order[..m]
                .iter()
                .map(|&i| ScoredRecord {
                    item_id: group.items[i].item_id,
                    logit: logits[i].as_f64(),
                    embedding: emb.row(i).iter().map(|v| v.as_f64()).collect(),
                })
                .collect();
            let tail = order[m..]
                .iter()
                .map(|&i| TailRecord { item_id: group.items[i].item_id, logit: logits[i].as_f64() })
                .collect();
            (scored, tail)
        };
        let bytes = WireMessage::ScoreResponse(ScoreResponse {
            query_id: group.query_id,
            precision: F::PRECISION,
            embedding_dim: d_e,
            scored,
            tail,
        })
        .encode()?;
        self.counters.bytes_sent += bytes.len() as u64;
        Ok(bytes)
    }
}

/// Merges leaf responses and runs the re-ranker. It holds the model only to
/// reach the re-ranker weights.
struct Master<F> {
    model: Arc<LtcsModel<F>>,
    counters: MasterCounters,
}

impl<F: Real> Master<F> {
    fn merge(&mut self, query_id: u64, responses: &[Vec<u8>], k: usize, index_of: &HashMap<u64, usize>) -> Result<(Vec<usize>, RerankResult)> {
        self.counters.queries += 1;
        // (candidate index, logit, embedding if sent)
        let mut pool: Vec<(usize, F, Option<Vec<F>>)> = Vec::new();
        for frame in responses {
            self.counters.bytes_received += frame.len() as u64;
            let resp = match WireMessage::decode(frame)? {
                WireMessage::ScoreResponse(r) => r,
                other => return Err(LtcsError::Protocol(format!("master got unexpected {other:?}"))),
            };
            if resp.query_id != query_id || resp.precision != F::PRECISION {
                return Err(LtcsError::Protocol(format!(
                    "response for query {} at {:?} does not match query {query_id} at {:?}",
                    resp.query_id,
                    resp.precision,
                    F::PRECISION
                )));
            }
            let idx = |id: u64| {
                index_of
                    .get(&id)
                    .copied()
                    .ok_or_else(|| LtcsError::Protocol(format!("leaf returned unknown item id {id}")))
            };
            for r in resp.scored {
                pool.push((idx(r.item_id)?, F::from_f64(r.logit), Some(r.embedding.into_iter().map(F::from_f64).collect())));
            }
            for t in resp.tail {
                pool.push((idx(t.item_id)?, F::from_f64(t.logit), None));
            }
        }
        if pool.is_empty() {
            return Err(LtcsError::State(format!("no candidates available for query {query_id}")));
        }
        pool.sort_by(|a, b| b.1.as_f64().total_cmp(&a.1.as_f64()).then(a.0.cmp(&b.0)));
        let m = k.min(pool.len());
        let d_e = self.model.embedding_dim();
        let mut top = Tensor2::zeros(m, d_e);
        for (r, entry) in pool[..m].iter().enumerate() {
            let emb = entry.2.as_ref().ok_or_else(|| {
                LtcsError::Protocol(format!("candidate {} is in the global top-{k} but arrived without an embedding", entry.0))
            })?;
            top.row_mut(r).copy_from_slice(emb);
        }
        let rr = self.model.rerank_forward(&top)?;
        self.counters.attention_scores += rr.attention_scores;

        let positions: Vec<usize> = (0..pool.len()).collect();
        let order = final_ranking(&positions, &rr.logits);
        let block_score: HashMap<usize, f64> = (0..m).map(|p| (p, rr.logits[p].as_f64())).collect();
        let mut reranked = Vec::with_capacity(m);
        let mut tail = Vec::with_capacity(pool.len() - m);
        let ids: Vec<u64> = {
            let mut by_index: Vec<(usize, u64)> = index_of.iter().map(|(&id, &i)| (i, id)).collect();
            by_index.sort_unstable();
            by_index.into_iter().map(|(_, id)| id).collect()
        };
        for &p in &order {
            let (ci, logit, _) = &pool[p];
            match block_score.get(&p) {
                Some(&s) => reranked.push(RankedRecord { item_id: ids[*ci], score: s }),
                None => tail.push(RankedRecord { item_id: ids[*ci], score: logit.as_f64() }),
            }
        }
        let ranking = order.iter().map(|&p| pool[p].0).collect();
        Ok((ranking, RerankResult { query_id, precision: F::PRECISION, reranked, tail }))
    }
}

/// In-process cluster of `shards` leaves and one master.
pub struct Cluster<F> {
    leaves: Vec<Leaf<F>>,
    master: Master<F>,
    partitioning: Partitioning,
    policy: FailurePolicy,
    top_k: usize,
}

impl<F: Real> Cluster<F> {
    pub fn new(model: LtcsModel<F>, shards: usize, top_k: usize, partitioning: Partitioning, policy: FailurePolicy) -> Result<Self> {
        if shards == 0 {
            return Err(LtcsError::InvalidArgument("a cluster needs at least one shard".into()));
        }
        if top_k == 0 {
            return Err(LtcsError::InvalidArgument("top_k must be >= 1".into()));
        }
        let model = Arc::new(model);
        let leaves = (0..shards)
            .map(|_| Leaf { model: Arc::clone(&model), counters: LeafCounters::default(), available: true })
            .collect();
        Ok(Cluster { leaves, master: Master { model, counters: MasterCounters::default() }, partitioning, policy, top_k })
    }

    pub fn shards(&self) -> usize {
        self.leaves.len()
    }

    pub fn set_leaf_available(&mut self, leaf: usize, available: bool) -> Result<()> {
        let shards = self.shards();
        let l = self
            .leaves
            .get_mut(leaf)
            .ok_or_else(|| LtcsError::InvalidArgument(format!("no leaf {leaf} in a {shards}-shard cluster")))?;
        l.available = available;
        Ok(())
    }

    pub fn stats(&self) -> ClusterStats {
        ClusterStats { leaves: self.leaves.iter().map(|l| l.counters).collect(), master: self.master.counters }
    }

    fn shard_of(&self, query_id: u64, index: usize, item_id: u64) -> usize {
        let s = self.leaves.len();
        match self.partitioning {
            Partitioning::RoundRobin => index % s,
            Partitioning::Random { seed } => (derive_seed(derive_seed(seed, query_id), item_id) % s as u64) as usize,
        }
    }

    pub fn serve_query(&mut self, group: &QueryGroup) -> Result<ServeOutcome> {
        let cfg = self.master.model.config().clone();
        group.validate(cfg.query_feature_dim, cfg.item_feature_dim, false)?;
        let mut index_of = HashMap::with_capacity(group.len());
        for (i, item) in group.items.iter().enumerate() {
            if index_of.insert(item.item_id, i).is_some() {
                return Err(LtcsError::Data(format!("query {}: duplicate item id {}", group.query_id, item.item_id)));
            }
        }
        let mut shards: Vec<Vec<usize>> = vec![Vec::new(); self.leaves.len()];
        for (i, item) in group.items.iter().enumerate() {
            shards[self.shard_of(group.query_id, i, item.item_id)].push(i);
        }

        let before: u64 = self.leaves.iter().map(|l| l.counters.embedding_computations).sum();
        let attention_before = self.master.counters.attention_scores;
        let mut responses = Vec::new();
        let mut missing = Vec::new();
        let mut bytes_on_wire = 0u64;
        for (s, members) in shards.iter().enumerate() {
            if !self.leaves[s].available {
                if self.policy == FailurePolicy::Fail {
                    return Err(LtcsError::State(format!("leaf {s} is unavailable for query {}", group.query_id)));
                }
                missing.push(s);
                continue;
            }
            let req = WireMessage::ScoreRequest(ScoreRequest {
                query_id: group.query_id,
                query_features: group.query_features.clone(),
                item_dim: cfg.item_feature_dim,
                items: members.iter().map(|&i| group.items[i].clone()).collect(),
            })
            .encode()?;
            bytes_on_wire += req.len() as u64;
            let resp = self.leaves[s].handle(&req, self.top_k)?;
            bytes_on_wire += resp.len() as u64;
            responses.push(resp);
        }
        let (ranking, result) = self.master.merge(group.query_id, &responses, self.top_k, &index_of)?;
        let frame = WireMessage::RerankResult(result.clone()).encode()?;
        bytes_on_wire += frame.len() as u64;
        let after: u64 = self.leaves.iter().map(|l| l.counters.embedding_computations).sum();
        Ok(ServeOutcome {
            query_id: group.query_id,
            ranking,
            result,
            missing_shards: missing,
            leaf_embedding_computations: after - before,
            master_initial_forwards: self.master.counters.initial_forwards,
            attention_scores: self.master.counters.attention_scores - attention_before,
            bytes_on_wire,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Item, LtcsConfig};

    fn group(n: usize, cfg: &LtcsConfig) -> QueryGroup {
        let items = (0..n)
            .map(|j| Item {
                item_id: 100 + j as u64,
                features: (0..cfg.item_feature_dim).map(|d| ((j * 7 + d * 3) % 11) as f64 / 5.0 - 1.0).collect(),
            })
            .collect();
        QueryGroup { query_id: 1, query_features: vec![0.3; cfg.query_feature_dim], items, labels: vec![0; n] }
    }

    #[test]
    fn matches_monolithic_forward() {
        let cfg = LtcsConfig::desk();
        let model = LtcsModel::<f64>::new(&cfg).unwrap();
        let g = group(23, &cfg);
        let mono = model.full_forward(&g, cfg.top_k).unwrap();
        for shards in [1, 2, 4, 7] {
            let mut c = Cluster::new(model.clone(), shards, cfg.top_k, Partitioning::RoundRobin, FailurePolicy::Fail).unwrap();
            let out = c.serve_query(&g).unwrap();
            assert_eq!(out.ranking, mono.final_ranking);
            assert_eq!(out.leaf_embedding_computations, 23);
            assert_eq!(out.master_initial_forwards, 0);
            assert_eq!(out.attention_scores, mono.attention_scores);
        }
    }

    #[test]
    fn failure_policies() {
        let cfg = LtcsConfig::desk();
        let model = LtcsModel::<f32>::new(&cfg).unwrap();
        let g = group(12, &cfg);
        let mut c = Cluster::new(model.clone(), 3, cfg.top_k, Partitioning::RoundRobin, FailurePolicy::Fail).unwrap();
        c.set_leaf_available(1, false).unwrap();
        assert!(matches!(c.serve_query(&g), Err(LtcsError::State(_))));
        let mut c = Cluster::new(model, 3, cfg.top_k, Partitioning::RoundRobin, FailurePolicy::Degrade).unwrap();
        c.set_leaf_available(1, false).unwrap();
        let out = c.serve_query(&g).unwrap();
        assert_eq!(out.missing_shards, vec![1]);
        assert_eq!(out.ranking.len(), 8);
    }
}
