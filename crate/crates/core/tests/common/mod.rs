#![allow(dead_code)]

use ltcs::model::{Item, LtcsConfig, LtcsModel, QueryGroup};
use ltcs::nn::{grad_check, GradCheckReport};
use ltcs::train::{accumulate_gradients, StepOptions};
use ltcs::Precision;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tiny f64 architecture: d_e = 8, two encoder layers, K = 4.
pub fn small_config(seed: u64) -> LtcsConfig {
    LtcsConfig {
        query_feature_dim: 3,
        item_feature_dim: 5,
        initial_hidden_widths: vec![12, 8],
        rerank_hidden_widths: vec![8],
        encoder_layers: 2,
        attention_heads: 2,
        top_k: 4,
        alpha: 0.5,
        seed,
        precision: Precision::F64,
        ..LtcsConfig::desk()
    }
}

/// Random group with `n` candidates and one positive.
pub fn random_group(cfg: &LtcsConfig, n: usize, seed: u64) -> QueryGroup {
    random_group_scaled(cfg, n, seed, 1.5)
}

/// Features uniform in `[-scale, scale]`.
pub fn random_group_scaled(cfg: &LtcsConfig, n: usize, seed: u64, scale: f64) -> QueryGroup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = (0..n)
        .map(|j| Item {
            item_id: j as u64,
            features: (0..cfg.item_feature_dim).map(|_| rng.gen_range(-scale..scale)).collect(),
        })
        .collect();
    let mut labels = vec![0u8; n];
    labels[rng.gen_range(0..n)] = 1;
    QueryGroup {
        query_id: seed,
        query_features: (0..cfg.query_feature_dim).map(|_| rng.gen_range(-scale..scale)).collect(),
        items,
        labels,
    }
}

// The composite loss is ~1.5, so one ulp of roundoff is ~1e-12 of numeric
// gradient at eps 1e-4; smaller steps drown tiny attention gradients, larger
// ones cross SmeLU's curvature breaks at +-beta.
pub const COMPOSITE_EPS: f64 = 1e-4;
pub const COMPOSITE_FEATURE_SCALE: f64 = 8.0;

/// Finite-difference check of the whole training objective on one random
/// group of `n` candidates.
pub fn composite_report(seed: u64, opts: &StepOptions, n: usize) -> GradCheckReport {
    let cfg = small_config(seed);
    let mut model = LtcsModel::<f64>::new(&cfg).unwrap();
    let group = random_group_scaled(&cfg, n, 1000 + seed, COMPOSITE_FEATURE_SCALE);
    let mut ps = std::mem::take(model.params_mut());
    grad_check(&mut ps, COMPOSITE_EPS, |ps, _| {
        std::mem::swap(model.params_mut(), ps);
        model.params_mut().zero_grads();
        let out = accumulate_gradients(&mut model, &group, opts);
        std::mem::swap(model.params_mut(), ps);
        // grad_check reads gradients from `ps`, which now holds the fresh ones.
        Ok(out?.combined)
    })
    .unwrap()
}
