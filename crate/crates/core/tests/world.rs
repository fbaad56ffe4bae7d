use ltcs::eval::ndcg;
use ltcs::world::{generate_dataset, oracle_optimal_ndcg, simulate_query, WorldConfig};

fn small_world() -> WorldConfig {
    WorldConfig { num_queries: 50, ..WorldConfig::default() }
}

#[test]
fn no_comparison_and_zero_temperature_books_the_best_item() {
    let cfg = WorldConfig { comparison_strength: 0.0, temperature: 0.0, ..small_world() };
    for q in 0..50 {
        let (group, truth) = simulate_query(&cfg, q).unwrap();
        let best = (0..group.len()).max_by(|&a, &b| truth.pointwise_utility[a].total_cmp(&truth.pointwise_utility[b])).unwrap();
        assert_eq!(truth.booked, best);
        assert_eq!(group.positives().collect::<Vec<_>>(), vec![best]);
    }
}

#[test]
fn strong_comparison_books_the_compromise() {
    let cfg = WorldConfig { comparison_strength: 1e6, temperature: 0.0, ..small_world() };
    let f = cfg.comparison_feature_index;
    for q in 0..50 {
        let (group, truth) = simulate_query(&cfg, q).unwrap();
        let s = &truth.consideration_set;
        let mean = s.iter().map(|&j| group.items[j].features[f]).sum::<f64>() / s.len() as f64;
        let closest = *s
            .iter()
            .min_by(|&&a, &&b| (group.items[a].features[f] - mean).abs().total_cmp(&(group.items[b].features[f] - mean).abs()))
            .unwrap();
        assert_eq!(truth.booked, closest);
    }
}

#[test]
fn consideration_set_is_top_by_pointwise_utility() {
    let cfg = small_world();
    let (group, truth) = simulate_query(&cfg, 3).unwrap();
    assert_eq!(truth.consideration_set.len(), cfg.consideration_size);
    let worst_in = truth.consideration_set.iter().map(|&j| truth.pointwise_utility[j]).fold(f64::INFINITY, f64::min);
    for j in 0..group.len() {
        let inside = truth.consideration_set.contains(&j);
        assert_eq!(truth.setwise_utility[j].is_some(), inside);
        if !inside {
            assert!(truth.pointwise_utility[j] <= worst_in);
            assert_eq!(truth.booking_probabilities[j], 0.0);
        }
    }
    assert!((truth.booking_probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn generation_is_deterministic_and_seeded() {
    let cfg = small_world();
    assert_eq!(generate_dataset(&cfg).unwrap(), generate_dataset(&cfg).unwrap());
    let other = generate_dataset(&WorldConfig { seed: 1, ..cfg.clone() }).unwrap();
    assert_ne!(generate_dataset(&cfg).unwrap(), other);
}

#[test]
fn eval_split_is_disjoint() {
    let cfg = small_world();
    let train = generate_dataset(&cfg).unwrap();
    let eval = generate_dataset(&cfg.eval_split(20)).unwrap();
    assert_eq!(eval.len(), 20);
    for g in &eval {
        assert!(train.iter().all(|t| t.query_id != g.query_id));
    }
}

#[test]
fn every_query_has_one_booking() {
    let cfg = small_world();
    for g in generate_dataset(&cfg).unwrap() {
        g.validate(cfg.query_feature_dim, cfg.item_feature_dim, true).unwrap();
        assert_eq!(g.len(), cfg.items_per_query);
    }
}

#[test]
fn oracle_beats_identity_order() {
    let cfg = small_world();
    let data = generate_dataset(&cfg).unwrap();
    let oracle = oracle_optimal_ndcg(&cfg, &data).unwrap();
    let identity: f64 = data.iter().map(|g| ndcg(&(0..g.len()).collect::<Vec<_>>(), &g.labels).unwrap()).sum::<f64>() / data.len() as f64;
    assert!(oracle > identity + 0.1, "oracle {oracle}, identity {identity}");
    assert!(oracle <= 1.0);
}

#[test]
fn invalid_worlds_are_rejected() {
    let bad = [
        WorldConfig { consideration_size: 0, ..small_world() },
        WorldConfig { comparison_feature_index: 99, ..small_world() },
        WorldConfig { temperature: -1.0, ..small_world() },
        WorldConfig { pointwise_weight_vector: vec![1.0], ..small_world() },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
}
