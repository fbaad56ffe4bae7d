use ltcs::eval::{
    mean, ndcg, sample_stdev, sweep, write_sweep_csv, Experiment, SweepParameter, SWEEP_CSV_HEADER,
};
use ltcs::world::{generate_dataset, WorldConfig};
use ltcs::{Execution, LtcsConfig, TrainConfig};

#[test]
fn ndcg_examples() {
    assert_eq!(ndcg(&[1, 0, 2], &[0, 1, 0]).unwrap(), 1.0);
    assert!((ndcg(&[0, 1, 2], &[0, 1, 0]).unwrap() - 1.0 / 3f64.log2()).abs() < 1e-15);
    assert!((ndcg(&[0, 1, 2], &[0, 0, 1]).unwrap() - 0.5).abs() < 1e-15);
    assert!(ndcg(&[0, 1], &[0, 0]).is_err());
    assert!(ndcg(&[0, 0], &[1, 0]).is_err());
    assert!(ndcg(&[0], &[1, 0]).is_err());
}

#[test]
fn summary_statistics() {
    assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
    assert_eq!(sample_stdev(&[1.0, 2.0, 3.0]), 1.0);
    assert_eq!(sample_stdev(&[4.0]), 0.0);
}

#[test]
fn sweep_rows_cover_grid_and_seeds() {
    let world = WorldConfig { num_queries: 30, items_per_query: 12, ..WorldConfig::default() };
    let exp = Experiment {
        train: generate_dataset(&world).unwrap(),
        eval: generate_dataset(&world.eval_split(10)).unwrap(),
        ltcs: LtcsConfig::desk(),
        train_config: TrainConfig { epochs: 1, ..TrainConfig::desk() },
    };
    let grid = [0.0, 0.5];
    let result = sweep(SweepParameter::Alpha, &grid, &[0, 1, 2], &exp, true, Execution::Sequential).unwrap();
    assert_eq!(result.cells.len(), 6);
    assert_eq!(result.summary.len(), 2);
    assert!(result.summary.iter().all(|s| s.gain_abs.is_some()));
    // alpha = 0 is the pointwise baseline itself.
    assert_eq!(result.summary[0].gain_abs, Some(0.0));

    let mut csv = Vec::new();
    write_sweep_csv(&result, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), SWEEP_CSV_HEADER);
    assert_eq!(lines.count(), 6);

    assert!(sweep(SweepParameter::Alpha, &grid, &[0, 1], &exp, false, Execution::Sequential).is_err());
}

#[test]
fn sweep_parameter_names() {
    for name in ["top_k", "encoder_layers", "alpha"] {
        assert_eq!(SweepParameter::parse(name).unwrap().name(), name);
    }
    assert!(SweepParameter::parse("depth").is_err());
}
