//! GCN and GAT encoders, the inner-product link decoder and its objective.
//!
//! Parameters live in a [`ParamStore`] under `gnn.{layer}.*`:
//! `w` (`in × heads·hidden`) for both kinds, plus `att_src` and `att_dst`
//! (`hidden × heads`) for GAT. Every layer applies ELU to its output.

mod decoder;

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{BoundParams, ParamStore, Trace, Var};
use crate::error::{DeaError, Result};
use crate::graph::{normalize, Edge, EdgeOperator, NormalizedOperator};
use crate::rng::Rng;

pub use decoder::{accuracy, auc, bce_loss, decode, PairIndex};

/// Negative slope inside GAT attention logits.
pub const ATTENTION_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Gcn,
    Gat,
}

impl std::str::FromStr for EncoderKind {
    type Err = DeaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Self::Gcn),
            "gat" => Ok(Self::Gat),
            other => Err(DeaError::Validation(format!("unknown encoder {other:?} (gcn|gat)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub layers: usize,
    /// Width per head; the layer output has `hidden · heads` columns.
    pub hidden: usize,
    pub heads: usize,
    pub dropout: f64,
}

impl EncoderConfig {
    pub fn gcn() -> Self {
        Self {
            kind: EncoderKind::Gcn,
            layers: 2,
            hidden: 128,
            heads: 1,
            dropout: 0.0,
        }
    }

    pub fn gat() -> Self {
        Self {
            kind: EncoderKind::Gat,
            layers: 2,
            hidden: 16,
            heads: 8,
            dropout: 0.0,
        }
    }

    pub fn for_kind(kind: EncoderKind) -> Self {
        match kind {
            EncoderKind::Gcn => Self::gcn(),
            EncoderKind::Gat => Self::gat(),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.hidden * self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.heads == 0 {
            return Err(DeaError::Validation(
                "encoder layers, hidden width and heads must be positive".into(),
            ));
        }
        if self.kind == EncoderKind::Gcn && self.heads != 1 {
            return Err(DeaError::Validation("GCN encoders have exactly one head".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(DeaError::Validation(format!(
                "dropout {} outside [0,1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Uniform Glorot initialization.
pub fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a))
}

pub fn param_name(layer: usize, field: &str) -> String {
    format!("gnn.{layer}.{field}")
}

/// Fresh encoder parameters for `in_dim` input features.
pub fn init_encoder(in_dim: usize, cfg: &EncoderConfig, rng: &mut Rng) -> Result<ParamStore> {
    cfg.validate()?;
    let mut p = ParamStore::new();
    let mut width = in_dim;
    for l in 0..cfg.layers {
        p.insert(param_name(l, "w"), glorot(width, cfg.out_dim(), rng));
        if cfg.kind == EncoderKind::Gat {
            p.insert(param_name(l, "att_src"), glorot(cfg.hidden, cfg.heads, rng));
            p.insert(param_name(l, "att_dst"), glorot(cfg.hidden, cfg.heads, rng));
        }
        width = cfg.out_dim();
    }
    Ok(p)
}

/// Directed message arcs: both directions of every edge, then one self-loop
/// per node. `edge_of[k]` is the undirected edge behind arc `k < 2|E|`.
#[derive(Clone, Debug)]
pub struct Arcs {
    pub src: Arc<Vec<usize>>,
    pub dst: Arc<Vec<usize>>,
    pub edge_of: Arc<Vec<usize>>,
}

/// A graph prepared for message passing.
#[derive(Clone, Debug)]
pub struct GraphInput {
    n: usize,
    edges: Arc<Vec<Edge>>,
    operator: Arc<NormalizedOperator>,
    arcs: Arcs,
}

impl GraphInput {
    pub fn new(n: usize, edges: &[Edge]) -> Result<Self> {
        let operator = Arc::new(normalize(edges, n)?);
        let m = edges.len();
        let mut src = Vec::with_capacity(2 * m + n);
        let mut dst = Vec::with_capacity(2 * m + n);
        let mut edge_of = Vec::with_capacity(2 * m);
        for (k, &(i, j)) in edges.iter().enumerate() {
            src.extend([j, i]);
            dst.extend([i, j]);
            edge_of.extend([k, k]);
        }
        src.extend(0..n);
        dst.extend(0..n);
        Ok(Self {
            n,
            edges: Arc::new(edges.to_vec()),
            operator,
            arcs: Arcs {
                src: Arc::new(src),
                dst: Arc::new(dst),
                edge_of: Arc::new(edge_of),
            },
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn operator(&self) -> &NormalizedOperator {
        &self.operator
    }
}

/// Node embeddings. `mask`, when given, is an `|E|×1` record of edge weights
/// (a hard 0/1 mask in practice) aligned with `graph.edges()`; gradients
/// reach it through the propagation. `dropout_rng = None` is eval mode.
pub fn encode(
    tr: &mut Trace,
    params: &BoundParams,
    x: Var,
    graph: &GraphInput,
    mask: Option<Var>,
    cfg: &EncoderConfig,
    mut dropout_rng: Option<&mut Rng>,
) -> Result<Var> {
    let (rows, _) = tr.shape(x);
    if rows != graph.n {
        return Err(DeaError::Shape {
            op: "encode",
            lhs: (graph.n, 0),
            rhs: tr.shape(x),
        });
    }
    if let Some(m) = mask {
        if tr.shape(m) != (graph.edges.len(), 1) {
            return Err(DeaError::Shape {
                op: "encode mask",
                lhs: (graph.edges.len(), 1),
                rhs: tr.shape(m),
            });
        }
    }
    let edge_op = match (cfg.kind, mask) {
        (EncoderKind::Gcn, Some(m)) => {
            let values: Vec<f64> = tr.value(m).iter().copied().collect();
            Some(Arc::new(EdgeOperator::from_mask(graph.n, &graph.edges, &values)))
        }
        _ => None,
    };
    let arc_weights = match (cfg.kind, mask) {
        (EncoderKind::Gat, Some(m)) => {
            let per_arc = tr.gather_rows(m, graph.arcs.edge_of.clone())?;
            let loops = tr.constant(Array2::ones((graph.n, 1)));
            Some(tr.concat_rows(&[per_arc, loops])?)
        }
        _ => None,
    };

    let mut h = x;
    for l in 0..cfg.layers {
        if let Some(rng) = dropout_rng.as_deref_mut() {
            h = tr.dropout(h, cfg.dropout, rng)?;
        }
        let z = tr.matmul(h, params.get(&param_name(l, "w")))?;
        let out = match cfg.kind {
            EncoderKind::Gcn => match (&edge_op, mask) {
                (Some(op), Some(m)) => tr.edge_propagate(op.clone(), m, z)?,
                _ => tr.spmm(graph.operator.clone(), z)?,
            },
            EncoderKind::Gat => gat_layer(tr, params, l, z, graph, arc_weights, cfg)?,
        };
        h = tr.elu(out, 1.0);
    }
    Ok(h)
}

fn gat_layer(
    tr: &mut Trace,
    params: &BoundParams,
    layer: usize,
    z: Var,
    graph: &GraphInput,
    arc_weights: Option<Var>,
    cfg: &EncoderConfig,
) -> Result<Var> {
    let att_src = params.get(&param_name(layer, "att_src"));
    let att_dst = params.get(&param_name(layer, "att_dst"));
    let d = cfg.hidden;
    let arcs = &graph.arcs;
    let mut heads = Vec::with_capacity(cfg.heads);
    for k in 0..cfg.heads {
        let zk = tr.slice_cols(z, k * d, (k + 1) * d)?;
        let a_src = tr.slice_cols(att_src, k, k + 1)?;
        let a_dst = tr.slice_cols(att_dst, k, k + 1)?;
        let s_src = tr.matmul(zk, a_src)?;
        let s_dst = tr.matmul(zk, a_dst)?;
        let l_src = tr.gather_rows(s_src, arcs.src.clone())?;
        let l_dst = tr.gather_rows(s_dst, arcs.dst.clone())?;
        let logits = tr.add(l_dst, l_src)?;
        let logits = tr.leaky_relu(logits, ATTENTION_SLOPE);
        let alpha = tr.group_softmax(logits, arc_weights, arcs.dst.clone(), graph.n)?;
        heads.push(tr.scatter_rows(alpha, zk, arcs.src.clone(), arcs.dst.clone(), graph.n)?);
    }
    if heads.len() == 1 {
        Ok(heads[0])
    } else {
        tr.concat_cols(&heads)
    }
}

/// Eval-mode embeddings as a plain matrix.
pub fn embed(
    params: &ParamStore,
    features: &Array2<f64>,
    graph: &GraphInput,
    mask: Option<&[f64]>,
    cfg: &EncoderConfig,
) -> Result<Array2<f64>> {
    let mut tr = Trace::new();
    let bound = params.bind_frozen(&mut tr);
    let x = tr.constant(features.clone());
    let m = mask.map(|m| tr.constant_column(m));
    let h = encode(&mut tr, &bound, x, graph, m, cfg, None)?;
    Ok(tr.value(h).clone())
}
