use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ltcs::eval::{
    evaluate_model, ndcg, stability_report, sweep, write_sweep_csv, write_sweep_json, EvalReport, Experiment,
    SweepParameter,
};
use ltcs::model::QueryGroup;
use ltcs::serving::{Cluster, FailurePolicy, Partitioning};
use ltcs::train::{load_checkpoint, save_checkpoint, train};
use ltcs::world::{bayes_factorization_check, bundled_worlds, generate_dataset_with, load_dataset, save_dataset};
use ltcs::{Checkpoint, Execution, LtcsConfig, LtcsError, LtcsModel, Precision, Real, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::manifest::{check_writable, manifest_path, sha256_file, sibling, Recorder};
use crate::{Cli, Command, DataArgs, Preset};

const INDEPENDENCE_TOL: f64 = 1e-9;

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.common.preset.name(), cli.common.config.as_deref())?;
    if let Some(seed) = cli.common.seed {
        cfg.set_seed(seed);
    }
    if let Some(p) = cli.common.precision() {
        cfg.set_precision(p);
    }
    let exec = cli.common.execution()?;
    match &cli.command {
        Command::GenData { eval_split, num_queries } => gen_data(cli, cfg, *eval_split, *num_queries, exec),
        Command::Train { data, alpha, epochs, top_k } => {
            if let Some(a) = alpha {
                cfg.set_alpha(*a)?;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            if let Some(k) = top_k {
                cfg.model.top_k = *k;
            }
            if cli.common.preset == Preset::Paper {
                return describe_paper(cli, &cfg);
            }
            train_cmd(cli, cfg, data, exec)
        }
        Command::Eval { checkpoint, data, eval_queries } => eval_cmd(cli, cfg, checkpoint, data.as_deref(), *eval_queries, exec),
        Command::Sweep { data, param, grid, seeds, baseline } => {
            sweep_cmd(cli, cfg, data, param, grid, *seeds, *baseline, exec)
        }
        Command::Stability { data, alphas, seeds } => stability_cmd(cli, cfg, data, alphas, *seeds, exec),
        Command::BayesCheck { world } => bayes_cmd(cli, cfg, world.as_deref()),
        Command::ServeSim { checkpoint, data, eval_queries, shards, top_k, failure_policy, partition_seed, down } => {
            let opts = ServeOptions {
                shards: *shards,
                top_k: *top_k,
                policy: failure_policy.parse()?,
                partitioning: partition_seed.map_or(Partitioning::RoundRobin, |seed| Partitioning::Random { seed }),
                down: down.clone(),
            };
            serve_cmd(cli, cfg, checkpoint, data.as_deref(), *eval_queries, &opts, exec)
        }
    }
}

fn required_out(cli: &Cli) -> Result<&Path> {
    cli.common.out.as_deref().ok_or_else(|| LtcsError::Config("--out is required for this command".into()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| LtcsError::Data(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn gen_data(cli: &Cli, mut cfg: RunConfig, eval_split: Option<usize>, num_queries: Option<usize>, exec: Execution) -> Result<()> {
    if let Some(n) = num_queries {
        cfg.world.num_queries = n;
    }
    cfg.world.validate()?;
    let out = required_out(cli)?;
    check_writable(&[out.to_path_buf(), manifest_path(out)], cli.common.force)?;
    let rec = Recorder::start("gen-data");
    let world = match eval_split {
        Some(n) => cfg.world.eval_split(n),
        None => cfg.world.clone(),
    };
    let groups = generate_dataset_with(&world, exec)?;
    save_dataset(out, Some(&world), &groups)?;
    rec.finish(&cfg, json!({ "eval_split": eval_split }), out, &[out.to_path_buf()])?;
    println!("wrote {} queries to {} (sha256 {})", groups.len(), out.display(), sha256_file(out)?);
    Ok(())
}

/// Training and held-out data from files, or generated from the world.
fn load_data(args: &DataArgs, cfg: &RunConfig, rec: &mut Recorder, exec: Execution) -> Result<(Vec<QueryGroup>, Vec<QueryGroup>)> {
    let mut world = cfg.world.clone();
    let train = match &args.data {
        Some(p) => {
            rec.input(p);
            let (header, groups) = load_dataset(p)?;
            if let Some(w) = header.world {
                world = w;
            }
            groups
        }
        None => generate_dataset_with(&cfg.world, exec)?,
    };
    let eval = match &args.eval_data {
        Some(p) => {
            rec.input(p);
            load_dataset(p)?.1
        }
        None => generate_dataset_with(&world.eval_split(args.eval_queries), exec)?,
    };
    Ok((train, eval))
}

fn check_dims(groups: &[QueryGroup], model: &LtcsConfig, what: &str) -> Result<()> {
    for g in groups {
        let dx = g.items.first().map_or(model.item_feature_dim, |i| i.features.len());
        if g.query_features.len() != model.query_feature_dim || dx != model.item_feature_dim {
            return Err(LtcsError::Config(format!(
                "{what} query {} has query/item dims {}/{}, the model expects {}/{}",
                g.query_id,
                g.query_features.len(),
                dx,
                model.query_feature_dim,
                model.item_feature_dim
            )));
        }
    }
    Ok(())
}

fn describe_paper(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    cfg.model.validate()?;
    let count = match cfg.model.precision {
        Precision::F32 => LtcsModel::<f32>::new(&cfg.model)?.params().num_scalars(),
        Precision::F64 => LtcsModel::<f64>::new(&cfg.model)?.params().num_scalars(),
    };
    println!(
        "paper architecture: initial widths {:?}, {} encoder layers x {} heads, top {}, re-ranker widths {:?}",
        cfg.model.initial_hidden_widths,
        cfg.model.encoder_layers,
        cfg.model.attention_heads,
        cfg.model.top_k,
        cfg.model.rerank_hidden_widths
    );
    println!("parameters: {count}");
    if let Some(out) = cli.common.out.as_deref() {
        check_writable(&[out.to_path_buf(), manifest_path(out)], cli.common.force)?;
        let rec = Recorder::start("train");
        write_json(out, &json!({ "model": cfg.model, "parameters": count }))?;
        rec.finish(cfg, json!({ "preset": "paper", "trained": false }), out, &[out.to_path_buf()])?;
    }
    Ok(())
}

fn train_cmd(cli: &Cli, mut cfg: RunConfig, data: &DataArgs, exec: Execution) -> Result<()> {
    cfg.validate()?;
    if cfg.train.eval_every == 0 {
        cfg.train.eval_every = 1;
    }
    let out = required_out(cli)?;
    let metrics = sibling(out, "metrics.json");
    check_writable(&[out.to_path_buf(), metrics.clone(), manifest_path(out)], cli.common.force)?;
    let mut rec = Recorder::start("train");
    let (train_set, eval_set) = load_data(data, &cfg, &mut rec, exec)?;
    check_dims(&train_set, &cfg.model, "training")?;
    check_dims(&eval_set, &cfg.model, "eval")?;
    let outcome = train(&train_set, Some(&eval_set), &cfg.model, &cfg.train)?;
    save_checkpoint(&outcome.checkpoint, out)?;
    write_json(&metrics, &outcome.history)?;
    rec.finish(&cfg, json!({ "preset": cli.common.preset.name() }), out, &[out.to_path_buf(), metrics])?;
    for h in &outcome.history {
        println!(
            "epoch {:>3}  loss {:.4}  initial {:.4}  rerank {}  ndcg end-to-end {}  initial-only {}",
            h.epoch,
            h.mean_loss,
            h.mean_initial_loss,
            h.mean_rerank_loss.map_or("-".into(), |v| format!("{v:.4}")),
            h.eval_ndcg_end_to_end.map_or("-".into(), |v| format!("{v:.4}")),
            h.eval_ndcg_initial_only.map_or("-".into(), |v| format!("{v:.4}")),
        );
    }
    println!("checkpoint written to {}", out.display());
    Ok(())
}

fn load_model_checked<F: Real>(ckpt: &Checkpoint, groups: &[QueryGroup]) -> Result<LtcsModel<F>> {
    check_dims(groups, &ckpt.ltcs_config, "dataset")?;
    ckpt.to_model::<F>()
}

fn eval_data(cfg: &RunConfig, data: Option<&Path>, eval_queries: usize, rec: &mut Recorder, exec: Execution) -> Result<Vec<QueryGroup>> {
    match data {
        Some(p) => {
            rec.input(p);
            Ok(load_dataset(p)?.1)
        }
        None => generate_dataset_with(&cfg.world.eval_split(eval_queries), exec),
    }
}

fn eval_cmd(cli: &Cli, cfg: RunConfig, checkpoint: &Path, data: Option<&Path>, eval_queries: usize, exec: Execution) -> Result<()> {
    let out = required_out(cli)?;
    check_writable(&[out.to_path_buf(), manifest_path(out)], cli.common.force)?;
    let mut rec = Recorder::start("eval");
    rec.input(checkpoint);
    let ckpt = load_checkpoint(checkpoint)?;
    let groups = eval_data(&cfg, data, eval_queries, &mut rec, exec)?;
    let precision = cli.common.precision().unwrap_or(ckpt.precision());
    let mut report: EvalReport = match precision {
        Precision::F32 => evaluate_model(&load_model_checked::<f32>(&ckpt, &groups)?, &groups, exec)?,
        Precision::F64 => evaluate_model(&load_model_checked::<f64>(&ckpt, &groups)?, &groups, exec)?,
    };
    report.seed = ckpt.seed;
    report.config_fingerprint = ckpt.fingerprint()?;
    write_json(out, &report)?;
    rec.finish(&cfg, json!({ "checkpoint": checkpoint, "precision": precision.bits() }), out, &[out.to_path_buf()])?;
    println!(
        "{} queries: end-to-end NDCG {:.4}, initial-only NDCG {:.4}",
        report.per_query.len(),
        report.ndcg_end_to_end,
        report.ndcg_initial_only
    );
    Ok(())
}

fn experiment(cfg: &RunConfig, data: &DataArgs, rec: &mut Recorder, exec: Execution) -> Result<Experiment> {
    cfg.validate()?;
    let (train_set, eval_set) = load_data(data, cfg, rec, exec)?;
    check_dims(&train_set, &cfg.model, "training")?;
    check_dims(&eval_set, &cfg.model, "eval")?;
    Ok(Experiment { train: train_set, eval: eval_set, ltcs: cfg.model.clone(), train_config: cfg.train.clone() })
}

#[allow(clippy::too_many_arguments)]
fn sweep_cmd(
    cli: &Cli,
    cfg: RunConfig,
    data: &DataArgs,
    param: &str,
    grid: &[f64],
    seeds: u64,
    baseline: bool,
    exec: Execution,
) -> Result<()> {
    let parameter = SweepParameter::parse(param)?;
    let out = required_out(cli)?;
    let summary_path = sibling(out, "summary.json");
    check_writable(&[out.to_path_buf(), summary_path.clone(), manifest_path(out)], cli.common.force)?;
    let mut rec = Recorder::start("sweep");
    let exp = experiment(&cfg, data, &mut rec, exec)?;
    let seed_list: Vec<u64> = (0..seeds).map(|i| cfg.train.seed + i).collect();
    let result = sweep(parameter, grid, &seed_list, &exp, baseline, exec)?;
    write_sweep_csv(&result, BufWriter::new(File::create(out)?))?;
    write_sweep_json(&result, BufWriter::new(File::create(&summary_path)?))?;
    rec.finish(
        &cfg,
        json!({ "param": param, "grid": grid, "seeds": seed_list, "baseline": baseline }),
        out,
        &[out.to_path_buf(), summary_path],
    )?;
    println!("{:>10}  {:>10}  {:>8}  {:>10}  {:>8}  {:>10}", parameter.name(), "end-to-end", "sd", "initial", "sd", "gain");
    for s in &result.summary {
        println!(
            "{:>10}  {:>10.4}  {:>8.4}  {:>10.4}  {:>8.4}  {:>10}",
            s.value,
            s.mean_end_to_end,
            s.stdev_end_to_end,
            s.mean_initial_only,
            s.stdev_initial_only,
            s.gain_abs.map_or("-".into(), |g| format!("{g:+.4}"))
        );
    }
    Ok(())
}

fn stability_cmd(cli: &Cli, cfg: RunConfig, data: &DataArgs, alphas: &[f64], seeds: usize, exec: Execution) -> Result<()> {
    let out = required_out(cli)?;
    check_writable(&[out.to_path_buf(), manifest_path(out)], cli.common.force)?;
    let mut rec = Recorder::start("stability");
    let exp = experiment(&cfg, data, &mut rec, exec)?;
    let report = stability_report(alphas, seeds, &exp, exec)?;
    write_json(out, &report)?;
    rec.finish(&cfg, json!({ "alphas": alphas, "seeds": report.seeds }), out, &[out.to_path_buf()])?;
    for r in &report.rows {
        println!(
            "alpha {:<5} end-to-end {:.4} (sd {:.4})  initial-only {:.4} (sd {:.4})",
            r.alpha, r.mean_end_to_end, r.stdev_end_to_end, r.mean_initial_only, r.stdev_initial_only
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct BayesRow {
    world: String,
    assumes_independence: bool,
    max_deviation: f64,
    states_checked: usize,
}

fn bayes_cmd(cli: &Cli, cfg: RunConfig, only: Option<&str>) -> Result<()> {
    if let Some(out) = cli.common.out.as_deref() {
        check_writable(&[out.to_path_buf(), manifest_path(out)], cli.common.force)?;
    }
    let rec = Recorder::start("bayes-check");
    let worlds = bundled_worlds();
    let last = worlds.len() - 1;
    let selected: Vec<(usize, _)> = worlds.iter().enumerate().filter(|(_, w)| only.map_or(true, |n| w.name == n)).collect();
    if selected.is_empty() {
        let names: Vec<&str> = worlds.iter().map(|w| w.name.as_str()).collect();
        return Err(LtcsError::Config(format!("unknown world {:?} (bundled: {})", only.unwrap_or(""), names.join(", "))));
    }
    let mut rows = Vec::new();
    for (i, w) in selected {
        let r = bayes_factorization_check(w)?;
        let row = BayesRow {
            world: w.name.clone(),
            assumes_independence: i != last,
            max_deviation: r.max_deviation,
            states_checked: r.states_checked,
        };
        println!(
            "{:<24} max deviation {:.3e}  ({} states, {})",
            row.world,
            row.max_deviation,
            row.states_checked,
            if row.assumes_independence { "conditionally independent" } else { "violates independence" }
        );
        rows.push(row);
    }
    if let Some(out) = cli.common.out.as_deref() {
        write_json(out, &rows)?;
        rec.finish(&cfg, json!({ "world": only }), out, &[out.to_path_buf()])?;
    }
    if let Some(bad) = rows.iter().find(|r| r.assumes_independence && r.max_deviation > INDEPENDENCE_TOL) {
        return Err(LtcsError::Numerical(format!(
            "{} deviates by {:.3e} although it satisfies conditional independence",
            bad.world, bad.max_deviation
        )));
    }
    Ok(())
}

struct ServeOptions {
    shards: usize,
    top_k: Option<usize>,
    policy: FailurePolicy,
    partitioning: Partitioning,
    down: Vec<usize>,
}

#[derive(Serialize)]
struct RankingLine<'a> {
    query_id: u64,
    ranking: &'a [u64],
}

#[derive(Serialize)]
struct ServeSummary {
    queries: usize,
    shards: usize,
    top_k: usize,
    degraded_queries: usize,
    mean_ndcg: f64,
    total_bytes_on_wire: u64,
    stats: ltcs::serving::ClusterStats,
}

fn serve<F: Real>(model: LtcsModel<F>, groups: &[QueryGroup], opts: &ServeOptions, out: &Path) -> Result<ServeSummary> {
    let top_k = opts.top_k.unwrap_or(model.config().top_k);
    let mut cluster = Cluster::new(model, opts.shards, top_k, opts.partitioning, opts.policy)?;
    for &leaf in &opts.down {
        cluster.set_leaf_available(leaf, false)?;
    }
    let mut file = BufWriter::new(File::create(out)?);
    let (mut degraded, mut ndcg_sum, mut bytes) = (0, 0.0, 0);
    for g in groups {
        let served = cluster.serve_query(g)?;
        let ids: Vec<u64> = served.ranking.iter().map(|&i| g.items[i].item_id).collect();
        serde_json::to_writer(&mut file, &RankingLine { query_id: g.query_id, ranking: &ids })
            .map_err(|e| LtcsError::Data(e.to_string()))?;
        writeln!(file)?;
        bytes += served.bytes_on_wire;
        if served.missing_shards.is_empty() {
            if g.labels.iter().any(|&y| y > 0) {
                ndcg_sum += ndcg(&served.ranking, &g.labels)?;
            }
        } else {
            degraded += 1;
        }
    }
    file.flush()?;
    let complete = groups.len() - degraded;
    Ok(ServeSummary {
        queries: groups.len(),
        shards: opts.shards,
        top_k,
        degraded_queries: degraded,
        mean_ndcg: if complete > 0 { ndcg_sum / complete as f64 } else { f64::NAN },
        total_bytes_on_wire: bytes,
        stats: cluster.stats(),
    })
}

fn serve_cmd(
    cli: &Cli,
    cfg: RunConfig,
    checkpoint: &Path,
    data: Option<&Path>,
    eval_queries: usize,
    opts: &ServeOptions,
    exec: Execution,
) -> Result<()> {
    let out = required_out(cli)?;
    let stats_path: PathBuf = sibling(out, "stats.json");
    check_writable(&[out.to_path_buf(), stats_path.clone(), manifest_path(out)], cli.common.force)?;
    let mut rec = Recorder::start("serve-sim");
    rec.input(checkpoint);
    let ckpt = load_checkpoint(checkpoint)?;
    let groups = eval_data(&cfg, data, eval_queries, &mut rec, exec)?;
    let precision = cli.common.precision().unwrap_or(ckpt.precision());
    let summary = match precision {
        Precision::F32 => serve(load_model_checked::<f32>(&ckpt, &groups)?, &groups, opts, out)?,
        Precision::F64 => serve(load_model_checked::<f64>(&ckpt, &groups)?, &groups, opts, out)?,
    };
    write_json(&stats_path, &summary)?;
    rec.finish(
        &cfg,
        json!({
            "checkpoint": checkpoint,
            "shards": opts.shards,
            "top_k": summary.top_k,
            "failure_policy": opts.policy,
            "partitioning": opts.partitioning,
            "down": opts.down,
            "precision": precision.bits(),
        }),
        out,
        &[out.to_path_buf(), stats_path],
    )?;
    println!(
        "served {} queries over {} shards: mean NDCG {:.4}, {} degraded, master initial forwards {}, master attention scores {}",
        summary.queries,
        summary.shards,
        summary.mean_ndcg,
        summary.degraded_queries,
        summary.stats.master.initial_forwards,
        summary.stats.master.attention_scores
    );
    Ok(())
}
