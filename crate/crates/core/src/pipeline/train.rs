use std::sync::Arc;

use super::{
    biased_dropout, dropedge, ConstraintDomain, ConstraintKind, Dataset, DeaConfig, EdgeDropout, EpochLog,
    LabelledPairs, Model, SamplerInput, TrainConfig,
};
use crate::autodiff::{AdamConfig, AdamState, BoundParams, ParamStore, Trace, Var};
use crate::error::{DeaError, Result};
use crate::fairness::{attribute_indicators, cov_g, cov_m, fairness_report, mixed_indicator, FairnessReport};
use crate::gnn::{bce_loss, decode, encode, init_encoder, EncoderConfig, GraphInput};
use crate::graph::Edge;
use crate::rng::SeedStreams;
use crate::sampler::{
    discretize_ste, edge_logits, eval_mask, gumbel_sigmoid, init_sampler, sample_noise, temperature_between,
    MaskSummary,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Pretrained {
    pub model: Model,
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneOutcome {
    pub model: Model,
    /// Noise-free hard mask over the training positives; `None` without a sampler.
    pub mask: Option<Vec<f64>>,
    pub epochs: Vec<EpochLog>,
}

fn non_finite(stage: &str, epoch: usize, what: &str, value: f64) -> DeaError {
    DeaError::NonFinite(format!("{stage} epoch {epoch}: {what} = {value}"))
}

fn optimizer_step(
    tr: &Trace,
    loss: Var,
    params: &mut ParamStore,
    bound: &BoundParams,
    adam: &mut AdamState,
    stage: &str,
    epoch: usize,
) -> Result<()> {
    let grads = tr.backward(loss)?;
    let grads = params.collect_grads(bound, &grads);
    adam.step(params, &grads).map_err(|e| match e {
        DeaError::NonFinite(msg) => DeaError::NonFinite(format!("{stage} epoch {epoch}: {msg}")),
        other => other,
    })
}

/// Fresh encoder for `data` seeded from the `init` stream.
pub fn init_model(data: &Dataset, encoder: &EncoderConfig, seed: u64) -> Result<Model> {
    let mut rng = SeedStreams::new(seed).rng("init", 0);
    Ok(Model {
        encoder: *encoder,
        in_dim: data.in_dim(),
        sampler: None,
        params: init_encoder(data.in_dim(), encoder, &mut rng)?,
    })
}

/// Link-prediction training on the training pairs.
pub fn pretrain(data: &Dataset, cfg: &TrainConfig) -> Result<Pretrained> {
    cfg.validate()?;
    let streams = SeedStreams::new(cfg.seed);
    let mut model = init_model(data, &cfg.encoder, cfg.seed)?;
    let mut adam = AdamState::new(AdamConfig {
        lr: cfg.lr,
        ..Default::default()
    });
    let mut dropout_rng = streams.rng("dropout", 0);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let dropped;
        let input = match cfg.edge_dropout {
            EdgeDropout::None => &data.input,
            EdgeDropout::Uniform { p } => {
                let kept = dropedge(&data.split.train_pos, p, streams.rng("edge_dropout", epoch as u64).gen_seed());
                dropped = GraphInput::new(data.graph.num_nodes(), &kept)?;
                &dropped
            }
            EdgeDropout::Biased { p_intra, p_inter } => {
                let kept = biased_dropout(
                    &data.split.train_pos,
                    data.graph.sensitive(),
                    p_intra,
                    p_inter,
                    streams.rng("edge_dropout", epoch as u64).gen_seed(),
                );
                dropped = GraphInput::new(data.graph.num_nodes(), &kept)?;
                &dropped
            }
        };
        let mut tr = Trace::new();
        let bound = model.params.bind(&mut tr);
        let x = tr.constant(data.features.clone());
        let rng = (cfg.encoder.dropout > 0.0).then_some(&mut dropout_rng);
        let h = encode(&mut tr, &bound, x, input, None, &cfg.encoder, rng)?;
        let s = decode(&mut tr, h, &data.train.index)?;
        let loss = bce_loss(&mut tr, s, &data.train.labels)?;
        let value = tr.scalar(loss);
        if !value.is_finite() {
            return Err(non_finite("pretrain", epoch, "loss", value));
        }
        losses.push(value);
        optimizer_step(&tr, loss, &mut model.params, &bound, &mut adam, "pretrain", epoch)?;
    }
    Ok(Pretrained { model, losses })
}

trait GenSeed {
    fn gen_seed(self) -> u64;
}

impl GenSeed for crate::rng::Rng {
    fn gen_seed(mut self) -> u64 {
        rand::Rng::gen(&mut self)
    }
}

fn sampler_source(
    tr: &mut Trace,
    bound: &BoundParams,
    x: Var,
    data: &Dataset,
    model: &Model,
    input: SamplerInput,
) -> Result<Var> {
    match input {
        SamplerInput::Embeddings => encode(tr, bound, x, &data.input, None, &model.encoder, None),
        SamplerInput::Features => Ok(x),
    }
}

enum Indicators {
    Mixed(Vec<f64>),
    PerAttribute(Vec<Vec<f64>>),
}

/// Joint adaptation of the encoder and a fresh edge sampler under
/// `BCE + λ·max(Cov − c, 0)`. `model` is not modified.
pub fn finetune_dea(model: &Model, data: &Dataset, cfg: &DeaConfig, delta: f64, seed: u64) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    model.check_compatible(data)?;
    let streams = SeedStreams::new(seed);
    let sampler_dim = match cfg.sampler_input {
        SamplerInput::Embeddings => model.encoder.out_dim(),
        SamplerInput::Features => data.in_dim(),
    };
    let mut params = model.encoder_params();
    if cfg.use_sampler {
        let sampler = init_sampler(sampler_dim, &cfg.sampler, &mut streams.rng("sampler_init", 0));
        params = params.merged(&sampler)?;
    }
    let mut adam = AdamState::new(AdamConfig {
        lr: cfg.lr,
        ..Default::default()
    });

    let n_pos = data.split.train_pos.len();
    let (domain_pairs, domain_index): (&[Edge], Option<Arc<Vec<usize>>>) = match cfg.domain {
        ConstraintDomain::TrainPairs => (&data.train.pairs, None),
        ConstraintDomain::TrainPositives => (&data.train.pairs[..n_pos], Some(Arc::new((0..n_pos).collect()))),
    };
    let s = data.graph.sensitive();
    let indicators = match cfg.constraint {
        ConstraintKind::CovM => Indicators::Mixed(mixed_indicator(domain_pairs, s)),
        ConstraintKind::CovG => {
            Indicators::PerAttribute(attribute_indicators(domain_pairs, s, data.graph.num_sensitive()))
        }
    };

    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut warned_empty = false;
    for epoch in 0..cfg.epochs {
        let tau = temperature_between(epoch, cfg.epochs, cfg.sampler.tau_start, cfg.sampler.tau_end);
        let mut tr = Trace::new();
        let bound = params.bind(&mut tr);
        let x = tr.constant(data.features.clone());

        let mut removed_fraction = 0.0;
        let mask = if cfg.use_sampler {
            let src = sampler_source(&mut tr, &bound, x, data, model, cfg.sampler_input)?;
            let z = edge_logits(&mut tr, &bound, src, &data.sampler_edges)?;
            let noise = sample_noise(n_pos, cfg.sampler.noise, &mut streams.rng("noise", epoch as u64));
            let soft = gumbel_sigmoid(&mut tr, z, tau, &noise)?;
            let hard = discretize_ste(&mut tr, soft);
            let values: Vec<f64> = tr.value(hard).iter().copied().collect();
            let summary = MaskSummary::of(&values);
            removed_fraction = summary.removed_fraction;
            if summary.kept == 0 && n_pos > 0 && !warned_empty {
                log::warn!("fine-tune epoch {epoch}: sampler removed every edge; propagating over self-loops only");
                warned_empty = true;
            }
            Some(hard)
        } else {
            None
        };

        let h = encode(&mut tr, &bound, x, &data.input, mask, &model.encoder, None)?;
        let scores = decode(&mut tr, h, &data.train.index)?;
        let bce = bce_loss(&mut tr, scores, &data.train.labels)?;
        let domain_scores = match &domain_index {
            Some(idx) => tr.gather_rows(scores, idx.clone())?,
            None => scores,
        };
        let cov = match &indicators {
            Indicators::Mixed(e) => cov_m(&mut tr, domain_scores, delta, e)?,
            Indicators::PerAttribute(e) => cov_g(&mut tr, domain_scores, delta, e)?,
        };
        let penalty = tr.scalar(cov);
        let loss = if cfg.lambda > 0.0 && penalty > cfg.c {
            let excess = tr.add_scalar(cov, -cfg.c);
            let weighted = tr.scale(excess, cfg.lambda);
            tr.add(bce, weighted)?
        } else {
            bce
        };
        let value = tr.scalar(loss);
        if !value.is_finite() {
            return Err(non_finite("fine-tune", epoch, "loss", value));
        }
        logs.push(EpochLog {
            epoch,
            loss: value,
            bce: tr.scalar(bce),
            penalty,
            tau,
            removed_fraction,
        });
        optimizer_step(&tr, loss, &mut params, &bound, &mut adam, "fine-tune", epoch)?;
    }

    let tuned = Model {
        encoder: model.encoder,
        in_dim: model.in_dim,
        sampler: cfg.use_sampler.then_some(cfg.sampler),
        params,
    };
    let mask = if cfg.use_sampler {
        Some(final_mask(&tuned, data, cfg.sampler_input)?)
    } else {
        None
    };
    Ok(FinetuneOutcome {
        model: tuned,
        mask,
        epochs: logs,
    })
}

/// Noise-free sampler decision for every training positive.
pub fn final_mask(model: &Model, data: &Dataset, input: SamplerInput) -> Result<Vec<f64>> {
    let mut tr = Trace::new();
    let bound = model.params.bind_frozen(&mut tr);
    let x = tr.constant(data.features.clone());
    let src = sampler_source(&mut tr, &bound, x, data, model, input)?;
    let z = edge_logits(&mut tr, &bound, src, &data.sampler_edges)?;
    let z: Vec<f64> = tr.value(z).iter().copied().collect();
    Ok(eval_mask(&z))
}

/// Eval-mode link probabilities for `pairs`, propagating over the masked
/// training graph when `mask` is given.
pub fn scores(model: &Model, data: &Dataset, mask: Option<&[f64]>, pairs: &LabelledPairs) -> Result<Vec<f64>> {
    let mut tr = Trace::new();
    let bound = model.params.bind_frozen(&mut tr);
    let x = tr.constant(data.features.clone());
    let m = mask.map(|m| tr.constant_column(m));
    let h = encode(&mut tr, &bound, x, &data.input, m, &model.encoder, None)?;
    let s = decode(&mut tr, h, &pairs.index)?;
    Ok(tr.value(s).iter().copied().collect())
}

/// `0.40, 0.41, …, 0.70`.
pub fn threshold_grid() -> Vec<f64> {
    (40..=70).map(|k| k as f64 / 100.0).collect()
}

/// Grid point with the best accuracy; ties go to the smallest threshold.
pub fn select_threshold(scores: &[f64], labels: &[f64], grid: &[f64]) -> f64 {
    if scores.is_empty() || grid.is_empty() {
        log::warn!("threshold selection without validation pairs; using 0.5");
        return 0.5;
    }
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for &d in grid {
        let acc = crate::gnn::accuracy(scores, labels, d);
        if acc > best.0 || (acc == best.0 && d < best.1) {
            best = (acc, d);
        }
    }
    best.1
}

/// Test-split report at threshold `delta`.
pub fn evaluate(model: &Model, mask: Option<&[f64]>, data: &Dataset, delta: f64, seed: u64) -> Result<FairnessReport> {
    if data.test.is_empty() {
        return Err(DeaError::UndefinedMetric("test split is empty".into()));
    }
    let s = scores(model, data, mask, &data.test)?;
    fairness_report(
        &s,
        &data.test.labels,
        &data.test.pairs,
        data.graph.sensitive(),
        data.graph.num_sensitive(),
        delta,
        seed,
    )
}

/// Threshold chosen on the validation pairs.
pub fn validation_threshold(model: &Model, mask: Option<&[f64]>, data: &Dataset) -> Result<f64> {
    let s = scores(model, data, mask, &data.val)?;
    Ok(select_threshold(&s, &data.val.labels, &threshold_grid()))
}
