//! End-to-end training and evaluation.
//!
//! Message passing always runs over the training positives of the split, so
//! validation and test links are never visible to the encoder.

mod ablation;
mod baselines;
mod train;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Checkpoint, ParamStore};
use crate::error::{DeaError, Result};
use crate::fairness::FairnessReport;
use crate::gnn::{EncoderConfig, GraphInput, PairIndex};
use crate::graph::{Edge, EdgeSplit, Graph};
use crate::sampler::SamplerConfig;

pub use ablation::{
    ablation_row, ablation_rows, ablation_suite, run_dea, select_lambda, summarize, AblationRow, LambdaCandidate, LambdaChoice, Variant, LAMBDA_ACCURACY_SLACK,
    LAMBDA_GRID,
};
pub use baselines::{biased_dropout, dropedge};
pub use train::{
    evaluate, final_mask, finetune_dea, init_model, pretrain, scores, select_threshold, threshold_grid,
    validation_threshold, FinetuneOutcome, Pretrained,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeDropout {
    None,
    /// Every edge dropped with probability `p`, resampled per epoch.
    Uniform { p: f64 },
    /// Intra-group edges dropped with `p_intra`, inter-group with `p_inter`.
    Biased { p_intra: f64, p_inter: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub neg_ratio: f64,
    pub edge_dropout: EdgeDropout,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.01,
            seed: 0,
            encoder: EncoderConfig::gcn(),
            neg_ratio: 1.0,
            edge_dropout: EdgeDropout::None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(DeaError::Validation(format!("learning rate {} must be positive", self.lr)));
        }
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        match self.edge_dropout {
            EdgeDropout::Uniform { p } if !prob(p) => {
                Err(DeaError::Validation(format!("edge dropout {p} outside [0,1]")))
            }
            EdgeDropout::Biased { p_intra, p_inter } if !prob(p_intra) || !prob(p_inter) => Err(
                DeaError::Validation(format!("edge dropout ({p_intra}, {p_inter}) outside [0,1]")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    CovM,
    CovG,
}

impl std::str::FromStr for ConstraintKind {
    type Err = DeaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "covm" => Ok(Self::CovM),
            "covg" => Ok(Self::CovG),
            other => Err(DeaError::Validation(format!("unknown constraint {other:?} (covm|covg)"))),
        }
    }
}

/// Edge set the covariance penalty is averaged over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintDomain {
    TrainPairs,
    TrainPositives,
}

/// What the sampler scores edges from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerInput {
    Embeddings,
    Features,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeaConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lambda: f64,
    pub constraint: ConstraintKind,
    pub c: f64,
    pub domain: ConstraintDomain,
    pub sampler: SamplerConfig,
    /// `false` fine-tunes on the original graph with the penalty only.
    pub use_sampler: bool,
    pub sampler_input: SamplerInput,
}

impl Default for DeaConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.01,
            lambda: 1.0,
            constraint: ConstraintKind::CovM,
            c: 0.0,
            domain: ConstraintDomain::TrainPairs,
            sampler: SamplerConfig::default(),
            use_sampler: true,
            sampler_input: SamplerInput::Embeddings,
        }
    }
}

impl DeaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(DeaError::Validation(format!("lambda {} must be >= 0", self.lambda)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(DeaError::Validation(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.sampler.tau_start > 0.0 && self.sampler.tau_end > 0.0) {
            return Err(DeaError::Validation("temperature endpoints must be positive".into()));
        }
        if self.sampler.hidden == 0 {
            return Err(DeaError::Validation("sampler hidden width must be positive".into()));
        }
        Ok(())
    }
}

/// Labelled node pairs with a prebuilt gather index.
#[derive(Clone, Debug)]
pub struct LabelledPairs {
    pub pairs: Vec<Edge>,
    pub labels: Vec<f64>,
    pub index: PairIndex,
}

impl LabelledPairs {
    pub fn new((pairs, labels): (Vec<Edge>, Vec<f64>)) -> Self {
        let index = PairIndex::new(&pairs);
        Self { pairs, labels, index }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// A graph, its node features and one edge split, prepared for training.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: Graph,
    pub features: Array2<f64>,
    pub split: EdgeSplit,
    /// Message-passing graph over the training positives.
    pub input: GraphInput,
    pub train: LabelledPairs,
    pub val: LabelledPairs,
    pub test: LabelledPairs,
    /// Index over the training positives, the sampler's edge set.
    pub sampler_edges: PairIndex,
}

impl Dataset {
    pub fn new(graph: Graph, features: Array2<f64>, split: EdgeSplit) -> Result<Self> {
        if features.nrows() != graph.num_nodes() {
            return Err(DeaError::Shape {
                op: "dataset features",
                lhs: (graph.num_nodes(), features.ncols()),
                rhs: features.dim(),
            });
        }
        let input = GraphInput::new(graph.num_nodes(), &split.train_pos)?;
        Ok(Self {
            train: LabelledPairs::new(split.train_pairs()),
            val: LabelledPairs::new(split.val_pairs()),
            test: LabelledPairs::new(split.test_pairs()),
            sampler_edges: PairIndex::new(&split.train_pos),
            input,
            graph,
            features,
            split,
        })
    }

    /// Uses the graph's own features.
    pub fn from_graph(graph: Graph, split: EdgeSplit) -> Result<Self> {
        let features = graph
            .features()
            .cloned()
            .ok_or_else(|| DeaError::Validation("graph has no node features".into()))?;
        Self::new(graph, features, split)
    }

    pub fn in_dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Encoder parameters (and, after fine-tuning, sampler parameters).
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub encoder: EncoderConfig,
    pub in_dim: usize,
    pub sampler: Option<SamplerConfig>,
    pub params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    encoder: EncoderConfig,
    in_dim: usize,
    sampler: Option<SamplerConfig>,
    #[serde(default)]
    extra: serde_json::Value,
}

impl Model {
    pub fn encoder_params(&self) -> ParamStore {
        self.params.subset("gnn.")
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        let meta = ModelMeta {
            encoder: self.encoder,
            in_dim: self.in_dim,
            sampler: self.sampler,
            extra,
        };
        Checkpoint::new(&self.params, serde_json::to_value(meta).expect("plain data"))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: ModelMeta = serde_json::from_value(ck.meta.clone())
            .map_err(|e| DeaError::Checkpoint(format!("missing model metadata: {e}")))?;
        let model = Self {
            encoder: meta.encoder,
            in_dim: meta.in_dim,
            sampler: meta.sampler,
            params: ck.params()?,
        };
        let mut width = model.in_dim;
        for l in 0..model.encoder.layers {
            let name = crate::gnn::param_name(l, "w");
            let w = model
                .params
                .get(&name)
                .ok_or_else(|| DeaError::Checkpoint(format!("missing parameter {name}")))?;
            if w.dim() != (width, model.encoder.out_dim()) {
                return Err(DeaError::Checkpoint(format!(
                    "{name} has shape {:?}, expected ({width}, {})",
                    w.dim(),
                    model.encoder.out_dim()
                )));
            }
            width = model.encoder.out_dim();
        }
        Ok(model)
    }

    /// Fails when the dataset's feature width differs from the model's.
    pub fn check_compatible(&self, data: &Dataset) -> Result<()> {
        if data.in_dim() != self.in_dim {
            return Err(DeaError::Checkpoint(format!(
                "model expects {} input features, dataset has {}",
                self.in_dim,
                data.in_dim()
            )));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub bce: f64,
    pub penalty: f64,
    pub tau: f64,
    pub removed_fraction: f64,
}

/// Outcome of one fine-tuning run, with the pre-trained model's metrics for
/// comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub before: FairnessReport,
    pub after: FairnessReport,
    /// Threshold held fixed during fine-tuning.
    pub finetune_threshold: f64,
    pub removed_fraction: f64,
    pub kept: usize,
    pub removed: usize,
    pub lambda: f64,
    pub epochs: Vec<EpochLog>,
    pub config: serde_json::Value,
}
