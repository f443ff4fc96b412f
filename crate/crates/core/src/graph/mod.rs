//! Graph data model, loaders, edge splitting and negative sampling,
//! propagation operators, spectral features and the SBM generator.

mod io;
mod operator;
mod sbm;
mod spectral;
mod split;

use std::collections::HashSet;

use ndarray::Array2;

use crate::error::{DeaError, Result};

pub use io::{load_graph, load_graph_with, write_graph, GraphFiles, LoadOptions};
pub use operator::{normalize, EdgeOperator, NormalizedOperator};
pub use sbm::{generate_sbm, SbmConfig};
pub use spectral::{
    laplacian_dense, spectral_features, spectral_pairs, symmetric_eigen, SpectralOptions,
    DENSE_LIMIT,
};
pub use split::{sample_negatives, split_edges, split_edges_with, EdgeSplit};

/// Undirected edge stored canonically as `(min, max)`.
pub type Edge = (usize, usize);

/// Canonical `(min, max)` form of an unordered pair.
#[inline]
pub fn canonical(i: usize, j: usize) -> Edge {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Undirected, unweighted graph with a categorical sensitive attribute per node.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    features: Option<Array2<f64>>,
    sensitive: Vec<usize>,
    num_sensitive: usize,
}

impl Graph {
    /// Builds a graph, canonicalizing pairs and dropping self-loops and
    /// duplicates (first occurrence wins, order otherwise preserved).
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = Edge>,
        sensitive: Vec<usize>,
        num_sensitive: usize,
        features: Option<Array2<f64>>,
    ) -> Result<Self> {
        if sensitive.len() != n {
            return Err(DeaError::Validation(format!(
                "sensitive vector has {} entries for {n} nodes",
                sensitive.len()
            )));
        }
        if num_sensitive < 2 {
            return Err(DeaError::Validation(format!(
                "need at least 2 sensitive categories, got {num_sensitive}"
            )));
        }
        if let Some((node, &s)) = sensitive.iter().enumerate().find(|(_, &s)| s >= num_sensitive) {
            return Err(DeaError::Validation(format!(
                "node {node} has sensitive index {s}, outside 0..{num_sensitive}"
            )));
        }
        if let Some(f) = &features {
            if f.nrows() != n {
                return Err(DeaError::Validation(format!(
                    "feature matrix has {} rows for {n} nodes",
                    f.nrows()
                )));
            }
        }
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(DeaError::Validation(format!(
                    "edge ({i}, {j}) references a node outside 0..{n}"
                )));
            }
            if i == j {
                continue;
            }
            let e = canonical(i, j);
            if seen.insert(e) {
                kept.push(e);
            }
        }
        Ok(Self {
            n,
            edges: kept,
            features,
            sensitive,
            num_sensitive,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn features(&self) -> Option<&Array2<f64>> {
        self.features.as_ref()
    }

    pub fn sensitive(&self) -> &[usize] {
        &self.sensitive
    }

    pub fn num_sensitive(&self) -> usize {
        self.num_sensitive
    }

    pub fn set_features(&mut self, features: Array2<f64>) -> Result<()> {
        if features.nrows() != self.n {
            return Err(DeaError::Validation(format!(
                "feature matrix has {} rows for {} nodes",
                features.nrows(),
                self.n
            )));
        }
        self.features = Some(features);
        Ok(())
    }

    pub fn edge_set(&self) -> HashSet<Edge> {
        self.edges.iter().copied().collect()
    }

    /// Node degrees over the stored edges.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Number of unordered node pairs with no edge between them.
    pub fn num_non_edges(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2 - self.edges.len()
    }

    /// Fraction of edges joining nodes with the same sensitive value.
    pub fn homophily(&self) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        let intra = self
            .edges
            .iter()
            .filter(|&&(i, j)| self.sensitive[i] == self.sensitive[j])
            .count();
        intra as f64 / self.edges.len() as f64
    }

    /// Copy of this graph restricted to `edges` (features and attributes kept).
    pub fn with_edges(&self, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        Graph::new(
            self.n,
            edges,
            self.sensitive.clone(),
            self.num_sensitive,
            self.features.clone(),
        )
    }
}
