mod common;

use common::{random_group, small_config};
use ltcs::eval::{train_baseline, train_independent_second_stage, BaselineKind};
use ltcs::model::{LtcsModel, QueryGroup};
use ltcs::train::{
    accumulate_gradients, combined_loss, listwise_loss, listwise_loss_with_grad, load_checkpoint, save_checkpoint,
    train, Checkpoint, StepOptions,
};
use ltcs::world::{generate_dataset, WorldConfig};
use ltcs::{LtcsConfig, TrainConfig};

fn tiny_data(n: usize) -> Vec<QueryGroup> {
    generate_dataset(&WorldConfig { num_queries: n, items_per_query: 10, ..WorldConfig::default() }).unwrap()
}

fn tiny_train() -> TrainConfig {
    TrainConfig { epochs: 1, ..TrainConfig::desk() }
}

fn gradients(alpha: f64, seed: u64) -> Vec<f64> {
    let cfg = small_config(seed);
    let mut model = LtcsModel::<f64>::new(&cfg).unwrap();
    let group = random_group(&cfg, 8, seed + 100);
    let opts = StepOptions { alpha, top_k: 4, guided_topk: true, initial_loss_on_top_k: false, detach_embeddings: false };
    accumulate_gradients(&mut model, &group, &opts).unwrap();
    model.params().ids().into_iter().flat_map(|id| model.params().grad(id).data().to_vec()).collect()
}

#[test]
fn gradients_are_linear_in_alpha() {
    for seed in 0..5 {
        let (g0, g1, gh) = (gradients(0.0, seed), gradients(1.0, seed), gradients(0.3, seed));
        for ((a, b), h) in g0.iter().zip(&g1).zip(&gh) {
            let expected = 0.7 * a + 0.3 * b;
            assert!((h - expected).abs() <= 1e-10 * (1.0 + expected.abs()), "{h} vs {expected}");
        }
    }
}

#[test]
fn pointwise_objective_leaves_reranker_untouched() {
    let cfg = small_config(3);
    let mut model = LtcsModel::<f64>::new(&cfg).unwrap();
    let opts = StepOptions { alpha: 0.0, top_k: 4, guided_topk: true, initial_loss_on_top_k: false, detach_embeddings: false };
    let losses = accumulate_gradients(&mut model, &random_group(&cfg, 8, 4), &opts).unwrap();
    assert!(losses.rerank.is_none());
    for id in model.rerank_param_ids() {
        assert!(model.params().grad(id).data().iter().all(|&g| g == 0.0));
    }
}

#[test]
fn listwise_loss_properties() {
    for k in 1..=40 {
        let logits = vec![0.7f64; k];
        let mut labels = vec![0u8; k];
        labels[k / 2] = 1;
        assert!((listwise_loss(&logits, &labels).unwrap() - (k as f64).ln()).abs() < 1e-12);
    }
    let logits = [0.3f64, -1.0, 2.0, 0.5];
    let labels = [0u8, 0, 1, 0];
    let (l, g) = listwise_loss_with_grad(&logits, &labels).unwrap();
    assert!(g.iter().sum::<f64>().abs() < 1e-12);
    assert!(g[2] < 0.0 && g.iter().enumerate().all(|(i, &v)| i == 2 || v > 0.0));
    let shifted: Vec<f64> = logits.iter().map(|v| v + 100.0).collect();
    assert!((listwise_loss(&shifted, &labels).unwrap() - l).abs() < 1e-9);
    assert!(listwise_loss(&[1e4f64, -1e4], &[0, 1]).unwrap().is_finite());
    assert_eq!(listwise_loss(&logits, &[0u8; 4]).unwrap(), 0.0);
    assert!(listwise_loss(&logits, &[0u8; 3]).is_err());
}

#[test]
fn combined_loss_mixes_linearly() {
    assert_eq!(combined_loss(2.0, 5.0, 0.0).unwrap(), 2.0);
    assert_eq!(combined_loss(2.0, 5.0, 1.0).unwrap(), 5.0);
    assert_eq!(combined_loss(2.0, 5.0, 0.5).unwrap(), 3.5);
    assert!(combined_loss(2.0, 5.0, 1.5).is_err());
    assert!(combined_loss(2.0, 5.0, -0.1).is_err());
}

#[test]
fn training_is_bit_reproducible() {
    let data = tiny_data(60);
    let a = train(&data, None, &LtcsConfig::desk(), &tiny_train()).unwrap();
    let b = train(&data, None, &LtcsConfig::desk(), &tiny_train()).unwrap();
    assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
    let c = train(&data, None, &LtcsConfig::desk(), &TrainConfig { seed: 9, ..tiny_train() }).unwrap();
    assert_ne!(a.checkpoint.tensors, c.checkpoint.tensors);
}

#[test]
fn training_reports_history_and_changes_weights() {
    let data = tiny_data(60);
    let eval = tiny_data(20);
    let tc = TrainConfig { epochs: 2, eval_every: 1, ..tiny_train() };
    let out = train(&data, Some(&eval), &LtcsConfig::desk(), &tc).unwrap();
    assert_eq!(out.history.len(), 2);
    for h in &out.history {
        assert!(h.mean_loss.is_finite() && h.mean_rerank_loss.is_some());
        assert!(h.eval_ndcg_end_to_end.is_some_and(|v| (0.0..=1.0).contains(&v)));
    }
    let init = Checkpoint::from_model(&LtcsModel::<f32>::new(&LtcsConfig::desk()).unwrap(), &tc, vec![]);
    assert_ne!(init.tensors, out.checkpoint.tensors);
}

#[test]
fn checkpoint_file_round_trip() {
    let data = tiny_data(20);
    let out = train(&data, None, &LtcsConfig::desk(), &tiny_train()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&out.checkpoint, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, out.checkpoint);
    assert_eq!(back.fingerprint().unwrap(), out.checkpoint.fingerprint().unwrap());

    let bytes = std::fs::read(&path).unwrap();
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    assert!(Checkpoint::from_bytes(b"not a checkpoint\n").is_err());
}

#[test]
fn independent_second_stage_freezes_the_initial_ranker() {
    let data = tiny_data(40);
    let stage1 = train_baseline(BaselineKind::PointwiseOnly, &data, None, &LtcsConfig::desk(), &tiny_train()).unwrap();
    let stage2 = train_independent_second_stage(&stage1.checkpoint, &data, None, &tiny_train()).unwrap();
    let initial = |c: &Checkpoint| c.tensors.iter().filter(|t| t.name.starts_with("initial.")).cloned().collect::<Vec<_>>();
    let rerank = |c: &Checkpoint| c.tensors.iter().filter(|t| t.name.starts_with("rerank.")).cloned().collect::<Vec<_>>();
    assert!(!initial(&stage1.checkpoint).is_empty());
    assert_eq!(initial(&stage1.checkpoint), initial(&stage2.checkpoint));
    assert_ne!(rerank(&stage1.checkpoint), rerank(&stage2.checkpoint));
}

#[test]
fn invalid_training_configs_are_rejected() {
    let data = tiny_data(5);
    for tc in [TrainConfig { alpha: 1.5, ..tiny_train() }, TrainConfig { groups_per_step: 0, ..tiny_train() }] {
        assert!(train(&data, None, &LtcsConfig::desk(), &tc).is_err());
    }
    let wrong = LtcsConfig { item_feature_dim: 3, ..LtcsConfig::desk() };
    assert!(train(&data, None, &wrong, &tiny_train()).is_err());
}
