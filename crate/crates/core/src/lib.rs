//! Fairness-enforcing fine-tuning for GNN link prediction.
//!
//! A pre-trained GCN or GAT link predictor is fine-tuned together with a
//! learnable edge sampler that drops edges from the input graph, under a
//! covariance penalty between dyadic group membership and prediction margins.

pub mod autodiff;
pub mod error;
pub mod fairness;
pub mod gnn;
pub mod graph;
pub mod pipeline;
pub mod rng;
pub mod sampler;

pub use error::{DeaError, Result};
