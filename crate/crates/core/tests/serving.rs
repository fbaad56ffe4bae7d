mod common;

use common::{random_group, small_config};
use ltcs::model::LtcsModel;
use ltcs::serving::{Cluster, FailurePolicy, Partitioning};

#[test]
fn cluster_matches_single_machine_ranking() {
    for seed in 0..10 {
        let cfg = small_config(seed);
        let model = LtcsModel::<f64>::new(&cfg).unwrap();
        for shards in 1..=5 {
            for partitioning in [Partitioning::RoundRobin, Partitioning::Random { seed: seed + 7 }] {
                let mut cluster = Cluster::new(model.clone(), shards, cfg.top_k, partitioning, FailurePolicy::Fail).unwrap();
                for q in 0..5 {
                    let group = random_group(&cfg, 3 + q as usize * 2, seed * 100 + q);
                    let local = model.full_forward(&group, cfg.top_k).unwrap();
                    let served = cluster.serve_query(&group).unwrap();
                    assert_eq!(served.ranking, local.final_ranking, "seed {seed} shards {shards}");
                    assert!(served.missing_shards.is_empty());
                }
            }
        }
    }
}

#[test]
fn master_never_scores_candidates() {
    let cfg = small_config(1);
    let model = LtcsModel::<f64>::new(&cfg).unwrap();
    let mut cluster = Cluster::new(model, 3, cfg.top_k, Partitioning::RoundRobin, FailurePolicy::Fail).unwrap();
    let group = random_group(&cfg, 11, 2);
    let served = cluster.serve_query(&group).unwrap();
    let stats = cluster.stats();
    assert_eq!(stats.master.initial_forwards, 0);
    assert_eq!(stats.master.queries, 1);
    assert_eq!(stats.leaves.len(), 3);
    assert_eq!(served.attention_scores, (cfg.encoder_layers * cfg.attention_heads * cfg.top_k * cfg.top_k) as u64);
    let received: u64 = stats.leaves.iter().map(|l| l.bytes_sent).sum();
    assert_eq!(received, stats.master.bytes_received);
}

#[test]
fn unavailable_leaf_fails_or_degrades() {
    let cfg = small_config(4);
    let model = LtcsModel::<f64>::new(&cfg).unwrap();
    let group = random_group(&cfg, 9, 5);

    let mut strict = Cluster::new(model.clone(), 3, cfg.top_k, Partitioning::RoundRobin, FailurePolicy::Fail).unwrap();
    strict.set_leaf_available(1, false).unwrap();
    assert!(strict.serve_query(&group).is_err());
    assert!(strict.set_leaf_available(3, false).is_err());

    let mut lenient = Cluster::new(model, 3, cfg.top_k, Partitioning::RoundRobin, FailurePolicy::Degrade).unwrap();
    lenient.set_leaf_available(1, false).unwrap();
    let served = lenient.serve_query(&group).unwrap();
    assert_eq!(served.missing_shards, vec![1]);
    assert_eq!(served.ranking.len(), 6);
    assert!(served.ranking.iter().all(|i| i % 3 != 1));
}

#[test]
fn invalid_cluster_shapes_are_rejected() {
    let cfg = small_config(6);
    let model = LtcsModel::<f64>::new(&cfg).unwrap();
    assert!(Cluster::new(model.clone(), 0, 4, Partitioning::RoundRobin, FailurePolicy::Fail).is_err());
    assert!(Cluster::new(model, 2, 0, Partitioning::RoundRobin, FailurePolicy::Fail).is_err());
}
