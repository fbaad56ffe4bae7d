//! Ranking quality: NDCG, end-to-end system evaluation, baselines, and the
//! multi-seed experiment drivers (sweeps and stability reports).

mod baselines;
mod metrics;
mod report;
mod stats;
mod sweep;
mod system;

pub use baselines::{train_baseline, train_independent_second_stage, BaselineKind};
pub use metrics::ndcg;
pub use report::{write_sweep_csv, write_sweep_json, SWEEP_CSV_HEADER};
pub use stats::{mean, sample_stdev};
pub use sweep::{
    run_system, stability_report, sweep, Experiment, StabilityReport, StabilityRow, SweepCell, SweepParameter,
    SweepResult, SweepSummary, SystemKind,
};
pub use system::{evaluate_model, evaluate_system, evaluate_system_with, EvalReport, QueryNdcg};
