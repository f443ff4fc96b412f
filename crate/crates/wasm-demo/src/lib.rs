//! Browser bindings for three demo operations. Each returns a JSON string;
//! the plain-Rust functions behind them are usable (and tested) natively.

use dea_core::fairness::FairnessReport;
use dea_core::graph::{generate_sbm, spectral_pairs, split_edges, Edge, SpectralOptions};
use dea_core::pipeline::{
    evaluate, finetune_dea, pretrain, summarize, validation_threshold, Dataset, DeaConfig, TrainConfig,
};
use dea_core::sampler::{gumbel_sigmoid_values, NoiseKind};
use dea_core::Result;
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Debug, Serialize)]
pub struct EmbeddingView {
    /// Second and third Laplacian eigenvectors per node.
    pub points: Vec<[f64; 2]>,
    pub groups: Vec<usize>,
    pub edges: Vec<Edge>,
    pub homophily: f64,
}

/// Two-block SBM laid out by its spectral embedding.
pub fn sbm_view(block: usize, p_intra: f64, p_inter: f64, seed: u64) -> Result<EmbeddingView> {
    let g = generate_sbm(2 * block, &[block, block], p_intra, p_inter, 0, seed)?;
    let (_, vecs) = spectral_pairs(&g, 3, &SpectralOptions::default())?;
    Ok(EmbeddingView {
        points: vecs.rows().into_iter().map(|r| [r[1], r[2]]).collect(),
        groups: g.sensitive().to_vec(),
        edges: g.edges().to_vec(),
        homophily: g.homophily(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SamplerView {
    /// Counts of soft mask values over equal-width bins of [0, 1].
    pub histogram: Vec<usize>,
    pub mean: f64,
    /// Fraction of draws the hard mask keeps.
    pub keep_rate: f64,
    /// Keep probability under logistic noise, independent of the temperature.
    pub keep_probability: f64,
}

/// Soft and hard mask statistics of one logit under repeated noise draws.
pub fn sampler_view(z: f64, tau: f64, draws: usize, seed: u64) -> Result<SamplerView> {
    let m = gumbel_sigmoid_values(&vec![z; draws], tau, seed, NoiseKind::Logistic)?;
    let mut histogram = vec![0; HISTOGRAM_BINS];
    for &v in &m {
        histogram[((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
    }
    let n = draws.max(1) as f64;
    Ok(SamplerView {
        histogram,
        mean: m.iter().sum::<f64>() / n,
        keep_rate: m.iter().filter(|&&v| v >= 0.5).count() as f64 / n,
        keep_probability: 1.0 / (1.0 + (-z).exp()),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DeaView {
    pub before: FairnessReport,
    pub after: FairnessReport,
    pub removed_fraction: f64,
    pub kept: usize,
    pub removed: usize,
    pub pretrain_losses: Vec<f64>,
    pub finetune_losses: Vec<f64>,
}

/// Pre-trains a small GCN on a two-block SBM and fine-tunes it with a fixed λ.
pub fn mini_dea(block: usize, p_intra: f64, p_inter: f64, lambda: f64, epochs: usize, seed: u64) -> Result<DeaView> {
    let g = generate_sbm(2 * block, &[block, block], p_intra, p_inter, 8, seed)?;
    let split = split_edges(&g, 0.05, 0.10, seed)?;
    let data = Dataset::from_graph(g, split)?;
    let train = TrainConfig { epochs, seed, ..Default::default() };
    let pre = pretrain(&data, &train)?;
    let delta = validation_threshold(&pre.model, None, &data)?;
    let before = evaluate(&pre.model, None, &data, delta, seed)?;
    let cfg = DeaConfig { epochs, lambda, ..Default::default() };
    cfg.validate()?;
    let run = finetune_dea(&pre.model, &data, &cfg, delta, seed)?;
    let result = summarize(&data, &run, before, delta, lambda, seed, serde_json::Value::Null)?;
    Ok(DeaView {
        before: result.before,
        after: result.after,
        removed_fraction: result.removed_fraction,
        kept: result.kept,
        removed: result.removed,
        pretrain_losses: pre.losses,
        finetune_losses: run.epochs.iter().map(|e| e.loss).collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsValue> {
    let value = r.map_err(|e| JsValue::from_str(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = sbmView)]
pub fn sbm_view_js(block: usize, p_intra: f64, p_inter: f64, seed: u32) -> std::result::Result<String, JsValue> {
    to_js(sbm_view(block, p_intra, p_inter, seed.into()))
}

#[wasm_bindgen(js_name = samplerView)]
pub fn sampler_view_js(z: f64, tau: f64, draws: usize, seed: u32) -> std::result::Result<String, JsValue> {
    to_js(sampler_view(z, tau, draws, seed.into()))
}

#[wasm_bindgen(js_name = miniDea)]
pub fn mini_dea_js(
    block: usize,
    p_intra: f64,
    p_inter: f64,
    lambda: f64,
    epochs: usize,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    to_js(mini_dea(block, p_intra, p_inter, lambda, epochs, seed.into()))
}
