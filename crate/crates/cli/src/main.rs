//! `dea`: generate graphs, pre-train, fine-tune with edge dropping under a
//! fairness penalty, and aggregate reports.

mod aggregate;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use dea_core::gnn::EncoderKind;
use dea_core::pipeline::ConstraintKind;

use config::{parse_seed_range, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dea", version, about = "Fairness-aware edge-dropping fine-tuning for GNN link prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a stochastic block model (or re-export loaded data) as graph files.
    Generate(Common),
    /// Pre-train an encoder per seed; writes checkpoint, loss curve and report.
    Pretrain(Common),
    /// Fine-tune a pre-trained checkpoint; writes model, mask and before/after report.
    Finetune {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to adapt (single seed); defaults to `<out>/seed-N/checkpoint.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Aggregate run directories into mean and population std per metric.
    Report {
        /// Run directories or experiment directories containing `seed-*`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Baseline, sampler-only, constraint-only and full variants per seed.
    Ablation(Common),
}

#[derive(Args)]
struct Common {
    /// Flat TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Half-open seed range, e.g. `0..10`.
    #[arg(long, value_parser = validate_range)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    constraint: Option<ConstraintKind>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    encoder: Option<EncoderKind>,
    /// Number of seeds run concurrently.
    #[arg(long)]
    parallel_seeds: Option<usize>,
}

fn validate_range(s: &str) -> Result<String, String> {
    parse_seed_range(s).map(|_| s.to_string()).map_err(|e| e.to_string())
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.seeds = None;
        }
        if let Some(r) = &self.seeds {
            cfg.seeds = Some(r.clone());
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(c) = self.constraint {
            cfg.constraint = c;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = Some(l);
        }
        if let Some(e) = self.encoder {
            cfg.encoder = e;
        }
        if let Some(p) = self.parallel_seeds {
            cfg.parallel_seeds = p;
        }
        cfg.validate()?;
        std::fs::create_dir_all(&cfg.out)?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(c) => commands::generate(&c.resolve()?),
        Command::Pretrain(c) => commands::pretrain_cmd(&c.resolve()?),
        Command::Finetune { common, checkpoint } => commands::finetune_cmd(&common.resolve()?, checkpoint.as_deref()),
        Command::Report { runs, out } => commands::report_cmd(&runs, &out),
        Command::Ablation(c) => commands::ablation_cmd(&c.resolve()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
