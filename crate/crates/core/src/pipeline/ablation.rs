use serde::{Deserialize, Serialize};

use super::train::{final_mask, init_model, scores, validation_threshold};
use super::{evaluate, finetune_dea, pretrain, Dataset, DeaConfig, FinetuneOutcome, Model, RunResult, SamplerInput, TrainConfig};
use crate::error::Result;
use crate::fairness::{fairness_report, FairnessReport};
use crate::sampler::MaskSummary;

pub const LAMBDA_GRID: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];

/// Largest validation-accuracy loss tolerated when picking λ.
pub const LAMBDA_ACCURACY_SLACK: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaCandidate {
    pub lambda: f64,
    pub val_accuracy: f64,
    pub val_dp_mixed: f64,
    pub removed_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub baseline_val_accuracy: f64,
    pub candidates: Vec<LambdaCandidate>,
}

fn validation_report(model: &Model, mask: Option<&[f64]>, data: &Dataset, delta: f64, seed: u64) -> Result<FairnessReport> {
    let s = scores(model, data, mask, &data.val)?;
    fairness_report(
        &s,
        &data.val.labels,
        &data.val.pairs,
        data.graph.sensitive(),
        data.graph.num_sensitive(),
        delta,
        seed,
    )
}

/// Fine-tunes once per grid value and keeps the λ with the lowest validation
/// ΔDP over mixed dyads among runs whose validation accuracy stays within
/// [`LAMBDA_ACCURACY_SLACK`] of the pre-trained model (the most accurate run
/// when none does).
pub fn select_lambda(
    pre: &Model,
    data: &Dataset,
    cfg: &DeaConfig,
    delta: f64,
    seed: u64,
    grid: &[f64],
) -> Result<(LambdaChoice, FinetuneOutcome)> {
    let base = validation_report(pre, None, data, delta, seed)?;
    let mut candidates = Vec::with_capacity(grid.len());
    let mut runs = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let run = finetune_dea(pre, data, &DeaConfig { lambda, ..*cfg }, delta, seed)?;
        let r = validation_report(&run.model, run.mask.as_deref(), data, delta, seed)?;
        candidates.push(LambdaCandidate {
            lambda,
            val_accuracy: r.accuracy,
            val_dp_mixed: r.dp_mixed,
            removed_fraction: MaskSummary::of(run.mask.as_deref().unwrap_or(&[])).removed_fraction,
        });
        runs.push(run);
    }
    let admissible = |c: &&LambdaCandidate| c.val_accuracy >= base.accuracy - LAMBDA_ACCURACY_SLACK;
    let best = candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| admissible(c))
        .min_by(|a, b| a.1.val_dp_mixed.total_cmp(&b.1.val_dp_mixed))
        .or_else(|| {
            candidates
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.val_accuracy.total_cmp(&b.1.val_accuracy))
        })
        .map(|(k, _)| k)
        .expect("non-empty grid");
    let choice = LambdaChoice {
        lambda: candidates[best].lambda,
        baseline_val_accuracy: base.accuracy,
        candidates,
    };
    Ok((choice, runs.swap_remove(best)))
}

/// Pre-trains, fine-tunes (with `cfg.lambda`, or the best of `grid` when
/// given) and reports test metrics before and after.
pub fn run_dea(data: &Dataset, train: &TrainConfig, cfg: &DeaConfig, grid: Option<&[f64]>) -> Result<(RunResult, Model, FinetuneOutcome)> {
    let seed = train.seed;
    let pre = pretrain(data, train)?.model;
    let delta = validation_threshold(&pre, None, data)?;
    let before = evaluate(&pre, None, data, delta, seed)?;
    let (lambda, run) = match grid {
        Some(g) => {
            let (choice, run) = select_lambda(&pre, data, cfg, delta, seed, g)?;
            (choice.lambda, run)
        }
        None => (cfg.lambda, finetune_dea(&pre, data, cfg, delta, seed)?),
    };
    let result = summarize(data, &run, before, delta, lambda, seed, serde_json::json!({"train": train, "dea": DeaConfig { lambda, ..*cfg }}))?;
    Ok((result, pre, run))
}

/// Test report of a fine-tuned model with a re-selected threshold.
pub fn summarize(
    data: &Dataset,
    run: &FinetuneOutcome,
    before: FairnessReport,
    finetune_threshold: f64,
    lambda: f64,
    seed: u64,
    config: serde_json::Value,
) -> Result<RunResult> {
    let mask = run.mask.as_deref();
    let delta = validation_threshold(&run.model, mask, data)?;
    let after = evaluate(&run.model, mask, data, delta, seed)?;
    let summary = MaskSummary::of(mask.unwrap_or(&[]));
    Ok(RunResult {
        before,
        after,
        finetune_threshold,
        removed_fraction: summary.removed_fraction,
        kept: if mask.is_some() { summary.kept } else { data.split.train_pos.len() },
        removed: summary.removed,
        lambda,
        epochs: run.epochs.clone(),
        config,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    /// Encoder and sampler trained jointly from scratch without the penalty.
    SamplerOnly,
    /// Penalized fine-tuning on the original graph.
    ConstraintOnly,
    Full,
    /// Full fine-tuning with the sampler reading raw features.
    FullWithFeatures,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::SamplerOnly,
        Variant::ConstraintOnly,
        Variant::Full,
        Variant::FullWithFeatures,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::SamplerOnly => "sampler_only",
            Variant::ConstraintOnly => "constraint_only",
            Variant::Full => "full",
            Variant::FullWithFeatures => "full_with_features",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub report: FairnessReport,
    pub removed_fraction: f64,
}

/// Test-split row for an already trained model, threshold chosen on validation.
pub fn ablation_row(variant: Variant, model: &Model, mask: Option<&[f64]>, data: &Dataset, seed: u64) -> Result<AblationRow> {
    let delta = validation_threshold(model, mask, data)?;
    Ok(AblationRow {
        variant,
        report: evaluate(model, mask, data, delta, seed)?,
        removed_fraction: MaskSummary::of(mask.unwrap_or(&[])).removed_fraction,
    })
}

/// One row per requested variant, all sharing the split and seed. The
/// sampler-only run trains for `train.epochs` from a fresh encoder; the
/// others fine-tune the pre-trained model with `cfg`.
pub fn ablation_suite(data: &Dataset, train: &TrainConfig, cfg: &DeaConfig, variants: &[Variant]) -> Result<Vec<AblationRow>> {
    let pre = pretrain(data, train)?.model;
    ablation_rows(data, train, &pre, cfg, variants)
}

/// [`ablation_suite`] around an existing pre-trained model.
pub fn ablation_rows(
    data: &Dataset,
    train: &TrainConfig,
    pre: &Model,
    cfg: &DeaConfig,
    variants: &[Variant],
) -> Result<Vec<AblationRow>> {
    let seed = train.seed;
    let delta = validation_threshold(pre, None, data)?;
    let mut rows = Vec::with_capacity(variants.len());
    for &v in variants {
        let row = match v {
            Variant::Baseline => ablation_row(v, pre, None, data, seed)?,
            Variant::SamplerOnly => {
                let fresh = init_model(data, &train.encoder, seed)?;
                let sc = DeaConfig {
                    lambda: 0.0,
                    epochs: train.epochs,
                    lr: train.lr,
                    use_sampler: true,
                    sampler_input: SamplerInput::Embeddings,
                    ..*cfg
                };
                let run = finetune_dea(&fresh, data, &sc, delta, seed)?;
                ablation_row(v, &run.model, run.mask.as_deref(), data, seed)?
            }
            Variant::ConstraintOnly => {
                let run = finetune_dea(pre, data, &DeaConfig { use_sampler: false, ..*cfg }, delta, seed)?;
                ablation_row(v, &run.model, None, data, seed)?
            }
            Variant::Full | Variant::FullWithFeatures => {
                let input = if v == Variant::Full {
                    SamplerInput::Embeddings
                } else {
                    SamplerInput::Features
                };
                let run = finetune_dea(
                    pre,
                    data,
                    &DeaConfig {
                        use_sampler: true,
                        sampler_input: input,
                        ..*cfg
                    },
                    delta,
                    seed,
                )?;
                let mask = final_mask(&run.model, data, input)?;
                ablation_row(v, &run.model, Some(&mask), data, seed)?
            }
        };
        rows.push(row);
    }
    Ok(rows)
}
