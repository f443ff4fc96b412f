//! Flat TOML experiment configuration.

use std::ops::Range;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use dea_core::gnn::{EncoderConfig, EncoderKind};
use dea_core::graph::{generate_sbm, load_graph, spectral_features, split_edges_with, Graph};
use dea_core::pipeline::{
    ConstraintDomain, ConstraintKind, Dataset, DeaConfig, SamplerInput, TrainConfig, LAMBDA_GRID,
};
use dea_core::sampler::{NoiseKind, SamplerConfig};
use serde::{Deserialize, Serialize};

/// Every key is optional; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Directory holding `edges.txt`, `sensitive.txt` and optionally `features.csv`.
    /// When absent a stochastic block model is generated.
    pub data_dir: Option<PathBuf>,
    pub groups: Vec<usize>,
    pub p_intra: f64,
    pub p_inter: f64,
    /// Spectral feature width, used for generated graphs and feature-less data.
    pub feature_dim: usize,
    /// Fixes the generated graph across seeds; defaults to the run seed.
    pub graph_seed: Option<u64>,
    pub val_frac: f64,
    pub test_frac: f64,

    pub encoder: EncoderKind,
    pub layers: Option<usize>,
    pub hidden: Option<usize>,
    pub heads: Option<usize>,
    pub dropout: f64,
    pub epochs: usize,
    pub lr: f64,
    pub neg_ratio: f64,

    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    /// Fixed λ; when absent λ is chosen on validation from `lambda_grid`.
    pub lambda: Option<f64>,
    pub lambda_grid: Vec<f64>,
    pub constraint: ConstraintKind,
    pub c: f64,
    pub constraint_domain: ConstraintDomain,
    pub sampler_input: SamplerInput,
    pub sampler_hidden: usize,
    pub init_bias: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    pub noise: NoiseKind,

    pub seed: u64,
    /// Half-open seed range such as `"0..10"`; overrides `seed`.
    pub seeds: Option<String>,
    pub out: PathBuf,
    pub parallel_seeds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let dea = DeaConfig::default();
        Self {
            data_dir: None,
            groups: vec![250, 250],
            p_intra: 0.05,
            p_inter: 0.005,
            feature_dim: 16,
            graph_seed: None,
            val_frac: 0.05,
            test_frac: 0.10,
            encoder: EncoderKind::Gcn,
            layers: None,
            hidden: None,
            heads: None,
            dropout: 0.0,
            epochs: train.epochs,
            lr: train.lr,
            neg_ratio: train.neg_ratio,
            finetune_epochs: dea.epochs,
            finetune_lr: dea.lr,
            lambda: None,
            lambda_grid: LAMBDA_GRID.to_vec(),
            constraint: dea.constraint,
            c: dea.c,
            constraint_domain: dea.domain,
            sampler_input: dea.sampler_input,
            sampler_hidden: dea.sampler.hidden,
            init_bias: dea.sampler.init_bias,
            tau_start: dea.sampler.tau_start,
            tau_end: dea.sampler.tau_end,
            noise: dea.sampler.noise,
            seed: 0,
            seeds: None,
            out: PathBuf::from("runs"),
            parallel_seeds: 1,
        }
    }
}

pub fn parse_seed_range(text: &str) -> Result<Range<u64>> {
    let (a, b) = text
        .split_once("..")
        .with_context(|| format!("seed range {text:?} must look like START..END"))?;
    let start: u64 = a.trim().parse().with_context(|| format!("bad seed range start {a:?}"))?;
    let end: u64 = b.trim().parse().with_context(|| format!("bad seed range end {b:?}"))?;
    ensure!(start < end, "seed range {text:?} is empty");
    Ok(start..end)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn seeds(&self) -> Result<Vec<u64>> {
        match &self.seeds {
            Some(r) => Ok(parse_seed_range(r)?.collect()),
            None => Ok(vec![self.seed]),
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        let base = EncoderConfig::for_kind(self.encoder);
        EncoderConfig {
            layers: self.layers.unwrap_or(base.layers),
            hidden: self.hidden.unwrap_or(base.hidden),
            heads: self.heads.unwrap_or(base.heads),
            dropout: self.dropout,
            ..base
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            seed,
            encoder: self.encoder_config(),
            neg_ratio: self.neg_ratio,
            ..Default::default()
        }
    }

    pub fn dea_config(&self, lambda: f64) -> DeaConfig {
        DeaConfig {
            epochs: self.finetune_epochs,
            lr: self.finetune_lr,
            lambda,
            constraint: self.constraint,
            c: self.c,
            domain: self.constraint_domain,
            sampler: SamplerConfig {
                hidden: self.sampler_hidden,
                noise: self.noise,
                tau_start: self.tau_start,
                tau_end: self.tau_end,
                init_bias: self.init_bias,
            },
            use_sampler: true,
            sampler_input: self.sampler_input,
        }
    }

    /// Checks every derived configuration before any computation.
    pub fn validate(&self) -> Result<()> {
        self.seeds()?;
        ensure!(self.epochs >= 1, "epochs must be >= 1");
        ensure!(self.parallel_seeds >= 1, "parallel_seeds must be >= 1");
        ensure!(!self.lambda_grid.is_empty() || self.lambda.is_some(), "lambda_grid is empty and no lambda given");
        if self.data_dir.is_none() {
            ensure!(self.groups.len() >= 2, "groups needs at least two blocks");
        }
        self.train_config(0).validate()?;
        self.dea_config(self.lambda.unwrap_or(1.0)).validate()?;
        for &l in &self.lambda_grid {
            self.dea_config(l).validate()?;
        }
        Ok(())
    }

    pub fn graph(&self, seed: u64) -> Result<Graph> {
        match &self.data_dir {
            Some(dir) => {
                let features = dir.join("features.csv");
                let features = features.exists().then_some(features);
                let mut g = load_graph(dir.join("edges.txt"), features.as_deref(), dir.join("sensitive.txt"))
                    .with_context(|| format!("loading graph from {}", dir.display()))?;
                if g.features().is_none() {
                    ensure!(self.feature_dim > 0, "data has no features.csv and feature_dim is 0");
                    let x = spectral_features(&g, self.feature_dim, 1e-6)?;
                    g.set_features(x)?;
                }
                Ok(g)
            }
            None => {
                if self.feature_dim == 0 {
                    bail!("generated graphs need feature_dim > 0");
                }
                let n = self.groups.iter().sum();
                let gseed = self.graph_seed.unwrap_or(seed);
                Ok(generate_sbm(n, &self.groups, self.p_intra, self.p_inter, self.feature_dim, gseed)?)
            }
        }
    }

    pub fn dataset(&self, seed: u64) -> Result<Dataset> {
        let g = self.graph(seed)?;
        let split = split_edges_with(&g, self.val_frac, self.test_frac, self.neg_ratio, seed)?;
        Ok(Dataset::from_graph(g, split)?)
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain data")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: ExperimentConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("lamda = 1.0").is_err());
    }

    #[test]
    fn flat_keys_parse() {
        let cfg: ExperimentConfig =
            toml::from_str("encoder = \"gat\"\nlambda = 0.5\nconstraint = \"covg\"\nseeds = \"2..5\"\ngroups = [10, 20]").unwrap();
        assert_eq!(cfg.encoder, EncoderKind::Gat);
        assert_eq!(cfg.lambda, Some(0.5));
        assert_eq!(cfg.constraint, ConstraintKind::CovG);
        assert_eq!(cfg.seeds().unwrap(), vec![2, 3, 4]);
        assert_eq!(cfg.encoder_config().heads, 8);
    }

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seed_range("0..3").unwrap(), 0..3);
        assert!(parse_seed_range("3..3").is_err());
        assert!(parse_seed_range("a..b").is_err());
        assert!(parse_seed_range("5").is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let cfg = ExperimentConfig { lambda: Some(-1.0), ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig { epochs: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
