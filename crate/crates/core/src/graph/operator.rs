use ndarray::{Array2, ArrayView2, Zip};

use super::{canonical, Edge};
use crate::error::{DeaError, Result};

/// Sparse symmetric propagation operator `D̃^{-1/2}(A+I)D̃^{-1/2}` in CSR form.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

/// Normalized operator over `edges` with one self-loop per node.
pub fn normalize(edges: &[Edge], n: usize) -> Result<NormalizedOperator> {
    for &(i, j) in edges {
        if i >= n || j >= n || i == j {
            return Err(DeaError::Validation(format!(
                "edge ({i}, {j}) invalid for a simple graph on {n} nodes"
            )));
        }
    }
    let mut uniq: Vec<Edge> = edges.iter().map(|&(i, j)| canonical(i, j)).collect();
    uniq.sort_unstable();
    uniq.dedup();
    let op = EdgeOperator::new(n, &uniq, None);
    Ok(op.to_operator(None))
}

impl NormalizedOperator {
    fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        for &(r, _, _) in &triplets {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let (col_idx, vals) = triplets.into_iter().map(|(_, c, v)| (c, v)).unzip();
        Self {
            n,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Coordinate-form entries, sorted by (row, col).
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.vals[k]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.n, self.n));
        for (r, c, v) in self.entries() {
            d[[r, c]] = v;
        }
        d
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        self.entries()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| self.vals[self.row_ptr[r]..self.row_ptr[r + 1]].iter().sum())
            .collect()
    }

    /// Sparse-dense product `self · x`.
    pub fn matmul(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n, "operator/row count mismatch");
        let mut out = Array2::zeros((self.n, x.ncols()));
        for (r, mut row) in out.rows_mut().into_iter().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row.scaled_add(self.vals[k], &x.row(self.col_idx[k]));
            }
        }
        out
    }

    /// `selfᵀ · x`.
    pub fn matmul_transpose(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n, "operator/row count mismatch");
        let mut out = Array2::zeros((self.n, x.ncols()));
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.row_mut(self.col_idx[k]).scaled_add(self.vals[k], &x.row(r));
            }
        }
        out
    }
}

/// Propagation over a fixed edge list where each edge carries a multiplicative
/// weight (the sampler's hard mask). Normalization coefficients come from the
/// degrees of the retained edges and are constants for differentiation; only
/// the per-edge weights and the node signal receive gradients.
#[derive(Clone, Debug)]
pub struct EdgeOperator {
    n: usize,
    edges: Vec<Edge>,
    edge_coef: Vec<f64>,
    self_coef: Vec<f64>,
}

impl EdgeOperator {
    /// `retained = None` keeps every edge.
    pub fn new(n: usize, edges: &[Edge], retained: Option<&[bool]>) -> Self {
        let mut deg = vec![1.0f64; n];
        for (k, &(i, j)) in edges.iter().enumerate() {
            if retained.is_none_or(|r| r[k]) {
                deg[i] += 1.0;
                deg[j] += 1.0;
            }
        }
        let edge_coef = edges
            .iter()
            .map(|&(i, j)| 1.0 / (deg[i] * deg[j]).sqrt())
            .collect();
        let self_coef = deg.iter().map(|d| 1.0 / d).collect();
        Self {
            n,
            edges: edges.to_vec(),
            edge_coef,
            self_coef,
        }
    }

    /// Operator for a hard mask: retained edges are those with weight >= 0.5.
    pub fn from_mask(n: usize, edges: &[Edge], mask: &[f64]) -> Self {
        let retained: Vec<bool> = mask.iter().map(|&m| m >= 0.5).collect();
        Self::new(n, edges, Some(&retained))
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `out_i = c_ii x_i + Σ_{e=(i,j)} w_e c_e x_j` over both directions.
    pub fn apply(&self, weights: &[f64], x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(weights.len(), self.edges.len());
        assert_eq!(x.nrows(), self.n);
        let mut out = x.to_owned();
        for (mut row, &c) in out.rows_mut().into_iter().zip(&self.self_coef) {
            row *= c;
        }
        for ((&(i, j), &c), &w) in self.edges.iter().zip(&self.edge_coef).zip(weights) {
            let a = w * c;
            if a != 0.0 {
                out.row_mut(i).scaled_add(a, &x.row(j));
                out.row_mut(j).scaled_add(a, &x.row(i));
            }
        }
        out
    }

    /// Gradient of `<upstream, apply(w, x)>` with respect to each edge weight.
    pub fn weight_grad(&self, upstream: ArrayView2<'_, f64>, x: ArrayView2<'_, f64>) -> Vec<f64> {
        self.edges
            .iter()
            .zip(&self.edge_coef)
            .map(|(&(i, j), &c)| {
                let a = Zip::from(upstream.row(i)).and(x.row(j)).fold(0.0, |s, g, v| s + g * v);
                let b = Zip::from(upstream.row(j)).and(x.row(i)).fold(0.0, |s, g, v| s + g * v);
                c * (a + b)
            })
            .collect()
    }

    /// Materializes the operator for the given weights (`None` = all ones).
    pub fn to_operator(&self, weights: Option<&[f64]>) -> NormalizedOperator {
        let mut triplets: Vec<(usize, usize, f64)> =
            self.self_coef.iter().enumerate().map(|(i, &c)| (i, i, c)).collect();
        for (k, (&(i, j), &c)) in self.edges.iter().zip(&self.edge_coef).enumerate() {
            let w = weights.map_or(1.0, |w| w[k]);
            if w != 0.0 {
                triplets.push((i, j, w * c));
                triplets.push((j, i, w * c));
            }
        }
        NormalizedOperator::from_triplets(self.n, triplets)
    }
}
