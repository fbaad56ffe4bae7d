use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LtcsError, Result};
use crate::eval::ndcg;
use crate::model::{Item, QueryGroup};
use crate::parallel::{self, Execution};
use crate::rng::stream_rng;

/// How the comparison stage turns the comparison feature into a utility bonus.
///
/// `d_j = x_j[f] - mean over the consideration set of x[f]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonOperator {
    /// Bonus `-γ d_j²`: items near the set's typical value gain relative to
    /// the extremes.
    #[default]
    Compromise,
    /// Bonus `-γ |d_j|`. Same preference with a kink at the set mean, which
    /// gradient training picks up far more slowly.
    AbsoluteCompromise,
    /// Bonus `γ d_j`. Shifts every member of the set by the same amount, so
    /// the choice probabilities inside the set reduce to `u_j + γ x_j[f]`.
    MeanCentered,
}

/// Two-stage user model.
///
/// Per query: features `q ~ N(0, I)`, a hidden market shift `z`, and items
/// `x_j = B q + z + ε_j`. Pointwise utility is
/// `u_j = w·x_j + λ qᵀ M x_j + noise·η_j`; the consideration set `S` is the
/// top-`c` items by `u`; inside `S` the setwise utility `v_j = u_j + bonus_j`
/// drives a softmax choice at `temperature` (0 picks the argmax).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub num_queries: usize,
    #[serde(default)]
    pub query_id_offset: u64,
    pub items_per_query: usize,
    pub query_feature_dim: usize,
    pub item_feature_dim: usize,
    pub pointwise_weight_vector: Vec<f64>,
    pub consideration_size: usize,
    pub comparison_strength: f64,
    pub comparison_feature_index: usize,
    #[serde(default)]
    pub comparison_operator: ComparisonOperator,
    pub noise_scale: f64,
    #[serde(default = "default_interaction")]
    pub query_interaction_scale: f64,
    #[serde(default = "default_market_shift")]
    pub market_shift_scale: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    pub seed: u64,
}

fn default_interaction() -> f64 {
    0.5
}

fn default_market_shift() -> f64 {
    1.0
}

fn default_temperature() -> f64 {
    0.25
}

impl Default for WorldConfig {
    /// Desk-scale training world; evaluate on `eval_split(2000)`.
    fn default() -> Self {
        WorldConfig {
            num_queries: 20_000,
            query_id_offset: 0,
            items_per_query: 20,
            query_feature_dim: 4,
            item_feature_dim: 12,
            pointwise_weight_vector: vec![0.5, -0.4, 0.3, 0.25, -0.2, 0.15, 1.5, 0.1, -0.1, 0.05, 0.0, 0.0],
            consideration_size: 10,
            comparison_strength: 1.5,
            comparison_feature_index: 6,
            comparison_operator: ComparisonOperator::Compromise,
            noise_scale: 0.3,
            query_interaction_scale: default_interaction(),
            market_shift_scale: default_market_shift(),
            temperature: default_temperature(),
            seed: 0,
        }
    }
}

impl WorldConfig {
    /// The same world with a disjoint block of query ids, for held-out evaluation.
    pub fn eval_split(&self, num_queries: usize) -> Self {
        WorldConfig {
            num_queries,
            query_id_offset: self.query_id_offset + self.num_queries as u64,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(LtcsError::Config(m));
        if self.num_queries == 0 {
            return err("num_queries must be >= 1".into());
        }
        if self.items_per_query == 0 {
            return err("items_per_query must be >= 1".into());
        }
        if self.query_feature_dim == 0 {
            return err("query_feature_dim must be >= 1".into());
        }
        if self.item_feature_dim == 0 {
            return err("item_feature_dim must be >= 1".into());
        }
        if self.consideration_size == 0 {
            return err("consideration_size must be >= 1".into());
        }
        if self.consideration_size > self.items_per_query {
            return err(format!(
                "consideration_size {} exceeds items_per_query {}",
                self.consideration_size, self.items_per_query
            ));
        }
        if self.comparison_feature_index >= self.item_feature_dim {
            return err(format!(
                "comparison_feature_index {} is out of range for item_feature_dim {}",
                self.comparison_feature_index, self.item_feature_dim
            ));
        }
        if self.pointwise_weight_vector.len() != self.item_feature_dim {
            return err(format!(
                "pointwise_weight_vector has {} entries, item_feature_dim is {}",
                self.pointwise_weight_vector.len(),
                self.item_feature_dim
            ));
        }
        for (name, v) in [
            ("comparison_strength", self.comparison_strength),
            ("noise_scale", self.noise_scale),
            ("query_interaction_scale", self.query_interaction_scale),
            ("market_shift_scale", self.market_shift_scale),
            ("temperature", self.temperature),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return err(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// Quantities the generator knows about one query but the data does not show.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryTruth {
    pub pointwise_utility: Vec<f64>,
    /// Consideration set, by pointwise utility descending.
    pub consideration_set: Vec<usize>,
    /// Setwise utility; `None` outside the consideration set.
    pub setwise_utility: Vec<Option<f64>>,
    pub booking_probabilities: Vec<f64>,
    pub booked: usize,
}

struct WorldStructure {
    /// `item_dim x query_dim`
    feature_shift: Vec<Vec<f64>>,
    /// `query_dim x item_dim`
    interaction: Vec<Vec<f64>>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn structure(cfg: &WorldConfig) -> WorldStructure {
    let mut rng = stream_rng(cfg.seed, u64::MAX);
    let (dq, dx) = (cfg.query_feature_dim, cfg.item_feature_dim);
    let feature_shift = (0..dx).map(|_| (0..dq).map(|_| 0.5 * normal(&mut rng)).collect()).collect();
    let norm = 1.0 / (dq as f64).sqrt();
    let interaction = (0..dq).map(|_| (0..dx).map(|_| norm * normal(&mut rng)).collect()).collect();
    WorldStructure { feature_shift, interaction }
}

fn by_value_desc(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

fn simulate(cfg: &WorldConfig, ws: &WorldStructure, query_id: u64) -> (QueryGroup, QueryTruth) {
    let mut rng = stream_rng(cfg.seed, query_id);
    let (dq, dx, n) = (cfg.query_feature_dim, cfg.item_feature_dim, cfg.items_per_query);
    let q: Vec<f64> = (0..dq).map(|_| normal(&mut rng)).collect();
    let shift: Vec<f64> = (0..dx).map(|_| cfg.market_shift_scale * normal(&mut rng)).collect();
    let center: Vec<f64> = (0..dx)
        .map(|i| ws.feature_shift[i].iter().zip(&q).map(|(b, qv)| b * qv).sum::<f64>() + shift[i])
        .collect();
    // qᵀ M, so the interaction term is a dot product with each item.
    let qm: Vec<f64> = (0..dx).map(|i| (0..dq).map(|k| q[k] * ws.interaction[k][i]).sum()).collect();

    let mut items = Vec::with_capacity(n);
    let mut utility = Vec::with_capacity(n);
    for j in 0..n {
        let x: Vec<f64> = center.iter().map(|c| c + normal(&mut rng)).collect();
        let eta = normal(&mut rng);
        let u = cfg.pointwise_weight_vector.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>()
            + cfg.query_interaction_scale * qm.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>()
            + cfg.noise_scale * eta;
        utility.push(u);
        items.push(Item { item_id: j as u64, features: x });
    }

    let set: Vec<usize> = by_value_desc(&utility)[..cfg.consideration_size].to_vec();
    let f = cfg.comparison_feature_index;
    let set_mean = set.iter().map(|&j| items[j].features[f]).sum::<f64>() / set.len() as f64;
    let mut setwise = vec![None; n];
    for &j in &set {
        let d = items[j].features[f] - set_mean;
        let bonus = match cfg.comparison_operator {
            ComparisonOperator::Compromise => -cfg.comparison_strength * d * d,
            ComparisonOperator::AbsoluteCompromise => -cfg.comparison_strength * d.abs(),
            ComparisonOperator::MeanCentered => cfg.comparison_strength * d,
        };
        setwise[j] = Some(utility[j] + bonus);
    }

    let mut probs = vec![0.0; n];
    if cfg.temperature == 0.0 {
        let best = set
            .iter()
            .copied()
            .max_by(|&a, &b| setwise[a].unwrap().total_cmp(&setwise[b].unwrap()).then(b.cmp(&a)))
            .unwrap();
        probs[best] = 1.0;
    } else {
        let scaled: Vec<f64> = set.iter().map(|&j| setwise[j].unwrap() / cfg.temperature).collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scaled.iter().map(|s| (s - max).exp()).sum();
        for (&j, s) in set.iter().zip(&scaled) {
            probs[j] = (s - max).exp() / z;
        }
    }
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    let mut booked = *set.last().unwrap();
    for &j in &set {
        acc += probs[j];
        if draw < acc && probs[j] > 0.0 {
            booked = j;
            break;
        }
    }
    if cfg.temperature == 0.0 {
        booked = set.iter().copied().find(|&j| probs[j] == 1.0).unwrap();
    }
    let mut labels = vec![0u8; n];
    labels[booked] = 1;

    (
        QueryGroup { query_id, query_features: q, items, labels },
        QueryTruth {
            pointwise_utility: utility,
            consideration_set: set,
            setwise_utility: setwise,
            booking_probabilities: probs,
            booked,
        },
    )
}

/// One query of the world together with its hidden quantities.
pub fn simulate_query(cfg: &WorldConfig, query_id: u64) -> Result<(QueryGroup, QueryTruth)> {
    cfg.validate()?;
    Ok(simulate(cfg, &structure(cfg), query_id))
}

/// Query ids `offset .. offset + num_queries`, each a pure function of `(seed, query_id)`.
pub fn generate_dataset(cfg: &WorldConfig) -> Result<Vec<QueryGroup>> {
    generate_dataset_with(cfg, Execution::default())
}

pub fn generate_dataset_with(cfg: &WorldConfig, exec: Execution) -> Result<Vec<QueryGroup>> {
    cfg.validate()?;
    let ws = structure(cfg);
    let ids: Vec<u64> = (0..cfg.num_queries as u64).map(|i| cfg.query_id_offset + i).collect();
    Ok(parallel::map(&ids, exec, |&qid| simulate(cfg, &ws, qid).0))
}

/// Mean NDCG of ranking each query by its true booking probability
/// (ties by pointwise utility), an upper reference for trained models.
pub fn oracle_optimal_ndcg(cfg: &WorldConfig, dataset: &[QueryGroup]) -> Result<f64> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(LtcsError::InvalidArgument("oracle_optimal_ndcg of an empty dataset".into()));
    }
    let ws = structure(cfg);
    let mut total = 0.0;
    for g in dataset {
        let (expected, truth) = simulate(cfg, &ws, g.query_id);
        if expected != *g {
            return Err(LtcsError::InvalidArgument(format!(
                "query {} was not generated by this world configuration",
                g.query_id
            )));
        }
        let mut order: Vec<usize> = (0..g.len()).collect();
        let p = &truth.booking_probabilities;
        let u = &truth.pointwise_utility;
        order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(u[b].total_cmp(&u[a])).then(a.cmp(&b)));
        total += ndcg(&order, &g.labels)?;
    }
    Ok(total / dataset.len() as f64)
}
