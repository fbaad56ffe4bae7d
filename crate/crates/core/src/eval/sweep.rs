use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LtcsError, Result};
use crate::eval::baselines::{train_baseline, BaselineKind};
use crate::eval::stats::{mean, sample_stdev};
use crate::eval::system::{evaluate_system_with, EvalReport};
use crate::model::{LtcsConfig, QueryGroup};
use crate::parallel::{self, Execution};
use crate::train::{train, TrainConfig};

/// Train/eval data and base configuration shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub train: Vec<QueryGroup>,
    pub eval: Vec<QueryGroup>,
    pub ltcs: LtcsConfig,
    pub train_config: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// Co-trained at the experiment's `alpha`.
    Ltcs,
    Baseline(BaselineKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    TopK,
    EncoderLayers,
    Alpha,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::TopK => "top_k",
            SweepParameter::EncoderLayers => "encoder_layers",
            SweepParameter::Alpha => "alpha",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "top_k" => Ok(SweepParameter::TopK),
            "encoder_layers" => Ok(SweepParameter::EncoderLayers),
            "alpha" => Ok(SweepParameter::Alpha),
            other => Err(LtcsError::Config(format!(
                "unknown sweep parameter {other:?} (expected top_k, encoder_layers or alpha)"
            ))),
        }
    }

    fn apply(self, value: f64, ltcs: &mut LtcsConfig, tc: &mut TrainConfig) -> Result<()> {
        let as_count = |v: f64| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(LtcsError::Config(format!("{} grid value {v} is not a positive integer", self.name())))
            }
        };
        match self {
            SweepParameter::TopK => ltcs.top_k = as_count(value)?,
            SweepParameter::EncoderLayers => ltcs.encoder_layers = as_count(value)?,
            SweepParameter::Alpha => {
                tc.alpha = value;
                ltcs.alpha = value;
            }
        }
        ltcs.validate()?;
        tc.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: f64,
    pub seed: u64,
    pub ndcg_end_to_end: f64,
    pub ndcg_initial_only: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub value: f64,
    pub mean_end_to_end: f64,
    pub stdev_end_to_end: f64,
    pub mean_initial_only: f64,
    pub stdev_initial_only: f64,
    /// End-to-end NDCG minus the pointwise-only baseline, when one was run.
    pub gain_abs: Option<f64>,
    pub gain_pct: Option<f64>,
    /// Initial-only NDCG minus the pointwise-only baseline.
    pub initial_gain_abs: Option<f64>,
    pub initial_gain_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Grid-major, then seed.
    pub cells: Vec<SweepCell>,
    pub baseline: Option<Vec<SweepCell>>,
    pub summary: Vec<SweepSummary>,
}

impl SweepResult {
    pub fn cells_for(&self, value: f64) -> impl Iterator<Item = &SweepCell> {
        self.cells.iter().filter(move |c| c.value == value)
    }

    pub fn summary_for(&self, value: f64) -> Option<&SweepSummary> {
        self.summary.iter().find(|s| s.value == value)
    }
}

/// Trains and evaluates one system for one seed. The seed drives both the
/// initialization and the shuffle schedule.
pub fn run_system(exp: &Experiment, kind: SystemKind, seed: u64) -> Result<EvalReport> {
    let ltcs = LtcsConfig { seed, ..exp.ltcs.clone() };
    let tc = TrainConfig { seed, ..exp.train_config.clone() };
    let outcome = match kind {
        SystemKind::Ltcs => train(&exp.train, None, &ltcs, &tc)?,
        SystemKind::Baseline(b) => train_baseline(b, &exp.train, None, &ltcs, &tc)?,
    };
    evaluate_system_with(&outcome.checkpoint, &exp.eval, Execution::Sequential)
}

fn run_cell(exp: &Experiment, parameter: SweepParameter, value: f64, seed: u64) -> Result<SweepCell> {
    let mut cell_exp = exp.clone();
    parameter.apply(value, &mut cell_exp.ltcs, &mut cell_exp.train_config)?;
    let report = run_system(&cell_exp, SystemKind::Ltcs, seed)?;
    Ok(SweepCell {
        value,
        seed,
        ndcg_end_to_end: report.ndcg_end_to_end,
        ndcg_initial_only: report.ndcg_initial_only,
    })
}

/// Trains and evaluates every `(value, seed)` cell; cells run in parallel
/// under `exec` and are assembled in grid-major order.
///
/// With `with_baseline`, a pointwise-only model per seed supplies the
/// reference for the gain columns (reused from the `alpha = 0` cells of an
/// alpha sweep).
pub fn sweep(
    parameter: SweepParameter,
    grid: &[f64],
    seeds: &[u64],
    exp: &Experiment,
    with_baseline: bool,
    exec: Execution,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(LtcsError::Config("sweep grid is empty".into()));
    }
    if seeds.len() < 3 {
        return Err(LtcsError::Config(format!("sweep needs at least 3 seeds, got {}", seeds.len())));
    }
    for &v in grid {
        parameter.apply(v, &mut exp.ltcs.clone(), &mut exp.train_config.clone())?;
    }
    let coords: Vec<(f64, u64)> = grid.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    let cells = parallel::try_map(&coords, exec, |&(v, s)| run_cell(exp, parameter, v, s))?;

    let baseline = if !with_baseline {
        None
    } else if parameter == SweepParameter::Alpha && grid.contains(&0.0) {
        Some(cells.iter().filter(|c| c.value == 0.0).cloned().collect::<Vec<_>>())
    } else {
        Some(parallel::try_map(seeds, exec, |&s| {
            let r = run_system(exp, SystemKind::Baseline(BaselineKind::PointwiseOnly), s)?;
            Ok(SweepCell { value: 0.0, seed: s, ndcg_end_to_end: r.ndcg_end_to_end, ndcg_initial_only: r.ndcg_initial_only })
        })?)
    };
    let base_mean = baseline.as_ref().map(|b| mean(&b.iter().map(|c| c.ndcg_end_to_end).collect::<Vec<_>>()));

    let mut by_value: BTreeMap<usize, Vec<&SweepCell>> = BTreeMap::new();
    for c in &cells {
        let gi = grid.iter().position(|&v| v == c.value).unwrap();
        by_value.entry(gi).or_default().push(c);
    }
    let summary = by_value
        .into_iter()
        .map(|(gi, cs)| {
            let e2e: Vec<f64> = cs.iter().map(|c| c.ndcg_end_to_end).collect();
            let init: Vec<f64> = cs.iter().map(|c| c.ndcg_initial_only).collect();
            let (me, mi) = (mean(&e2e), mean(&init));
            SweepSummary {
                value: grid[gi],
                mean_end_to_end: me,
                stdev_end_to_end: sample_stdev(&e2e),
                mean_initial_only: mi,
                stdev_initial_only: sample_stdev(&init),
                gain_abs: base_mean.map(|b| me - b),
                gain_pct: base_mean.map(|b| 100.0 * (me - b) / b),
                initial_gain_abs: base_mean.map(|b| mi - b),
                initial_gain_pct: base_mean.map(|b| 100.0 * (mi - b) / b),
            }
        })
        .collect();

    Ok(SweepResult { parameter, grid: grid.to_vec(), seeds: seeds.to_vec(), cells, baseline, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub alpha: f64,
    pub mean_end_to_end: f64,
    pub stdev_end_to_end: f64,
    pub mean_initial_only: f64,
    pub stdev_initial_only: f64,
    pub per_seed_end_to_end: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<StabilityRow>,
}

/// Cross-seed spread of end-to-end NDCG per `alpha`.
pub fn stability_report(alphas: &[f64], num_seeds: usize, exp: &Experiment, exec: Execution) -> Result<StabilityReport> {
    if num_seeds < 5 {
        return Err(LtcsError::Config(format!("stability report needs at least 5 seeds, got {num_seeds}")));
    }
    let base = exp.train_config.seed;
    let seeds: Vec<u64> = (0..num_seeds as u64).map(|i| base + i).collect();
    let result = sweep(SweepParameter::Alpha, alphas, &seeds, exp, false, exec)?;
    let rows = result
        .summary
        .iter()
        .map(|s| StabilityRow {
            alpha: s.value,
            mean_end_to_end: s.mean_end_to_end,
            stdev_end_to_end: s.stdev_end_to_end,
            mean_initial_only: s.mean_initial_only,
            stdev_initial_only: s.stdev_initial_only,
            per_seed_end_to_end: result.cells_for(s.value).map(|c| c.ndcg_end_to_end).collect(),
        })
        .collect();
    Ok(StabilityReport { seeds, rows })
}
