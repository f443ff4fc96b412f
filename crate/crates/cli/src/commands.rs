use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use dea_core::autodiff::Checkpoint;
use dea_core::fairness::FairnessReport;
use dea_core::graph::write_graph;
use dea_core::pipeline::{
    ablation_rows, evaluate, finetune_dea, pretrain, select_lambda, summarize, validation_threshold,
    EpochLog, LambdaChoice, Model, RunResult, Variant,
};
use dea_core::sampler::write_mask;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate, text_table, MetricRow};
use crate::config::ExperimentConfig;

pub const CHECKPOINT: &str = "checkpoint.json";
pub const PRETRAIN_REPORT: &str = "pretrain_report.json";
pub const FINETUNED: &str = "finetuned.json";
pub const FINETUNE_REPORT: &str = "finetune_report.json";
pub const MASK: &str = "mask.txt";

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))
}

/// Runs `job` for every seed, `cfg.parallel_seeds` at a time, in seed order.
fn for_seeds<T: Send>(cfg: &ExperimentConfig, job: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let seeds = cfg.seeds()?;
    if cfg.parallel_seeds <= 1 {
        return seeds.into_iter().map(job).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.parallel_seeds).build()?;
    pool.install(|| seeds.into_par_iter().map(&job).collect())
}

#[derive(Serialize)]
struct GraphSummary {
    seed: u64,
    num_sensitive: usize,
    nodes: usize,
    edges: usize,
    homophily: f64,
    feature_dim: usize,
}

pub fn generate(cfg: &ExperimentConfig) -> Result<()> {
    let multi = cfg.seeds()?.len() > 1;
    let summaries = for_seeds(cfg, |seed| {
        let g = cfg.graph(seed)?;
        let dir = if multi { seed_dir(&cfg.out, seed) } else { cfg.out.clone() };
        write_graph(&g, &dir)?;
        Ok(GraphSummary {
            seed,
            num_sensitive: g.num_sensitive(),
            nodes: g.num_nodes(),
            edges: g.num_edges(),
            homophily: g.homophily(),
            feature_dim: g.features().map_or(0, |x| x.ncols()),
        })
    })?;
    println!("{:>6}  {:>4}  {:>7}  {:>7}  {:>9}", "seed", "|S|", "nodes", "edges", "homophily");
    for s in &summaries {
        println!("{:>6}  {:>4}  {:>7}  {:>7}  {:>9.4}", s.seed, s.num_sensitive, s.nodes, s.edges, s.homophily);
    }
    write_json(
        &cfg.out.join("generate.json"),
        &serde_json::json!({"config": cfg.echo(), "graphs": summaries}),
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PretrainReport {
    pub seed: u64,
    pub threshold: f64,
    pub report: FairnessReport,
    pub losses: Vec<f64>,
    pub config: serde_json::Value,
}

pub fn pretrain_cmd(cfg: &ExperimentConfig) -> Result<()> {
    let reports = for_seeds(cfg, |seed| {
        let data = cfg.dataset(seed)?;
        let pre = pretrain(&data, &cfg.train_config(seed))?;
        let threshold = validation_threshold(&pre.model, None, &data)?;
        let report = evaluate(&pre.model, None, &data, threshold, seed)?;
        let dir = seed_dir(&cfg.out, seed);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        pre.model
            .to_checkpoint(serde_json::json!({"seed": seed, "config": cfg.echo()}))
            .save(&dir.join(CHECKPOINT))?;
        let mut w = csv_writer(&dir.join("pretrain_loss.csv"))?;
        w.write_record(["epoch", "loss"])?;
        for (e, l) in pre.losses.iter().enumerate() {
            w.write_record([e.to_string(), l.to_string()])?;
        }
        w.flush()?;
        let out = PretrainReport {
            seed,
            threshold,
            report,
            losses: pre.losses,
            config: cfg.echo(),
        };
        write_json(&dir.join(PRETRAIN_REPORT), &out)?;
        Ok(out)
    })?;
    for r in &reports {
        println!(
            "seed {}: accuracy {:.4} auc {:.4} dp_mixed {:.4} (threshold {:.2})",
            r.seed, r.report.accuracy, r.report.auc, r.report.dp_mixed, r.threshold
        );
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub seed: u64,
    pub result: RunResult,
    pub lambda_choice: Option<LambdaChoice>,
    pub config: serde_json::Value,
}

pub fn finetune_cmd(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<()> {
    if checkpoint.is_some() {
        ensure!(cfg.seeds()?.len() == 1, "--checkpoint applies to a single seed");
    }
    let reports = for_seeds(cfg, |seed| {
        let dir = seed_dir(&cfg.out, seed);
        let path = checkpoint.map_or_else(|| dir.join(CHECKPOINT), Path::to_path_buf);
        let ck = Checkpoint::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
        let pre = Model::from_checkpoint(&ck)?;
        let data = cfg.dataset(seed)?;
        pre.check_compatible(&data)?;

        let delta = validation_threshold(&pre, None, &data)?;
        let before = evaluate(&pre, None, &data, delta, seed)?;
        let (lambda, choice, run) = match cfg.lambda {
            Some(l) => (l, None, finetune_dea(&pre, &data, &cfg.dea_config(l), delta, seed)?),
            None => {
                let (choice, run) = select_lambda(&pre, &data, &cfg.dea_config(1.0), delta, seed, &cfg.lambda_grid)?;
                (choice.lambda, Some(choice), run)
            }
        };
        let result = summarize(&data, &run, before, delta, lambda, seed, cfg.echo())?;

        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        run.model
            .to_checkpoint(serde_json::json!({"seed": seed, "lambda": lambda, "config": cfg.echo()}))
            .save(&dir.join(FINETUNED))?;
        if let Some(mask) = &run.mask {
            write_mask(&dir.join(MASK), &data.split.train_pos, mask)?;
        }
        write_epochs(&dir.join("finetune_loss.csv"), &run.epochs)?;
        let mut w = csv_writer(&dir.join("comparison.csv"))?;
        w.write_record(["metric", "before", "after"])?;
        for name in FairnessReport::METRICS {
            let (b, a) = (result.before.metric(name), result.after.metric(name));
            w.write_record([name.to_string(), fmt_opt(b), fmt_opt(a)])?;
        }
        w.write_record(["threshold".to_string(), result.before.threshold.to_string(), result.after.threshold.to_string()])?;
        w.flush()?;
        let out = FinetuneReport {
            seed,
            result,
            lambda_choice: choice,
            config: cfg.echo(),
        };
        write_json(&dir.join(FINETUNE_REPORT), &out)?;
        Ok(out)
    })?;
    for r in &reports {
        let (b, a) = (&r.result.before, &r.result.after);
        println!(
            "seed {}: lambda {} accuracy {:.4}->{:.4} dp_mixed {:.4}->{:.4} removed {:.3}",
            r.seed, r.result.lambda, b.accuracy, a.accuracy, b.dp_mixed, a.dp_mixed, r.result.removed_fraction
        );
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn write_epochs(path: &Path, epochs: &[EpochLog]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for e in epochs {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

fn report_metrics(prefix: &str, r: &FairnessReport) -> MetricRow {
    FairnessReport::METRICS
        .iter()
        .map(|m| (format!("{prefix}{m}"), r.metric(m).expect("listed metric")))
        .collect()
}

/// Metric row of one run directory and the schema it was read with.
fn run_metrics(dir: &Path) -> Result<(&'static str, MetricRow)> {
    let fine = dir.join(FINETUNE_REPORT);
    if fine.exists() {
        let r: FinetuneReport = read_json(&fine)?;
        let mut row = report_metrics("before_", &r.result.before);
        row.extend(report_metrics("after_", &r.result.after));
        row.push(("removed_fraction".into(), r.result.removed_fraction));
        row.push(("lambda".into(), r.result.lambda));
        return Ok(("finetune", row));
    }
    let pre = dir.join(PRETRAIN_REPORT);
    if pre.exists() {
        let r: PretrainReport = read_json(&pre)?;
        return Ok(("pretrain", report_metrics("", &r.report)));
    }
    bail!("{} holds neither {FINETUNE_REPORT} nor {PRETRAIN_REPORT}", dir.display())
}

/// Expands experiment directories into their `seed-*` run directories.
fn run_dirs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for dir in inputs {
        let mut seeds: Vec<(u64, PathBuf)> = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let seed = name.strip_prefix("seed-")?.parse().ok()?;
                e.path().is_dir().then(|| (seed, e.path()))
            })
            .collect();
        if seeds.is_empty() {
            out.push(dir.clone());
        } else {
            seeds.sort();
            out.extend(seeds.into_iter().map(|(_, p)| p));
        }
    }
    Ok(out)
}

pub fn report_cmd(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let dirs = run_dirs(inputs)?;
    let mut kind = None;
    let mut rows = Vec::with_capacity(dirs.len());
    for d in &dirs {
        let (k, row) = run_metrics(d)?;
        if let Some(prev) = kind {
            ensure!(prev == k, "cannot aggregate {prev} and {k} runs together ({})", d.display());
        }
        kind = Some(k);
        rows.push(row);
    }
    let aggs = aggregate(&rows)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = csv_writer(&out.join("aggregate.csv"))?;
    w.write_record(["metric", "mean", "std_population", "runs"])?;
    for a in &aggs {
        w.write_record([a.metric.clone(), a.mean.to_string(), a.std.to_string(), a.runs.to_string()])?;
    }
    w.flush()?;
    let table = text_table(&aggs);
    fs::write(out.join("aggregate.txt"), &table).with_context(|| format!("writing {}", out.display()))?;
    print!("{table}");
    Ok(())
}

pub fn ablation_cmd(cfg: &ExperimentConfig) -> Result<()> {
    let per_seed = for_seeds(cfg, |seed| {
        let data = cfg.dataset(seed)?;
        let train = cfg.train_config(seed);
        let pre = pretrain(&data, &train)?.model;
        let lambda = match cfg.lambda {
            Some(l) => l,
            None => {
                let delta = validation_threshold(&pre, None, &data)?;
                select_lambda(&pre, &data, &cfg.dea_config(1.0), delta, seed, &cfg.lambda_grid)?.0.lambda
            }
        };
        let rows = ablation_rows(&data, &train, &pre, &cfg.dea_config(lambda), &Variant::ALL)?;
        let dir = seed_dir(&cfg.out, seed);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut w = csv_writer(&dir.join("ablation.csv"))?;
        w.write_record(
            ["variant", "lambda"]
                .into_iter()
                .chain(FairnessReport::METRICS)
                .chain(["removed_fraction"]),
        )?;
        for r in &rows {
            let mut rec = vec![r.variant.name().to_string(), lambda.to_string()];
            rec.extend(FairnessReport::METRICS.iter().map(|m| fmt_opt(r.report.metric(m))));
            rec.push(r.removed_fraction.to_string());
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(rows)
    })?;

    let mut w = csv_writer(&cfg.out.join("ablation_summary.csv"))?;
    w.write_record(["variant", "metric", "mean", "std_population", "runs"])?;
    println!("{:<20} {:>16} {:>16}   (std = population)", "variant", "accuracy", "dp_mixed");
    for (k, v) in Variant::ALL.iter().enumerate() {
        let rows: Vec<MetricRow> = per_seed
            .iter()
            .map(|rows| {
                let mut m = report_metrics("", &rows[k].report);
                m.push(("removed_fraction".into(), rows[k].removed_fraction));
                m
            })
            .collect();
        let aggs = aggregate(&rows)?;
        for a in &aggs {
            w.write_record([v.name().to_string(), a.metric.clone(), a.mean.to_string(), a.std.to_string(), a.runs.to_string()])?;
        }
        let find = |name: &str| aggs.iter().find(|a| a.metric == name).expect("metric present");
        let (acc, dp) = (find("accuracy"), find("dp_mixed"));
        println!(
            "{:<20} {:>8.4} ± {:<6.4} {:>8.4} ± {:<6.4}",
            v.name(),
            acc.mean,
            acc.std,
            dp.mean,
            dp.std
        );
    }
    w.flush()?;
    write_json(&cfg.out.join("ablation.json"), &serde_json::json!({"config": cfg.echo(), "runs": per_seed}))
}
