use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{canonical, Edge, Graph};
use crate::error::{DeaError, Result};
use crate::rng::{seeded, SeedStreams};

/// Train/validation/test partition of the positive edges, each paired with
/// negatives sampled once from the non-edges of the full graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train_pos: Vec<Edge>,
    pub train_neg: Vec<Edge>,
    pub val_pos: Vec<Edge>,
    pub val_neg: Vec<Edge>,
    pub test_pos: Vec<Edge>,
    pub test_neg: Vec<Edge>,
}

impl EdgeSplit {
    /// `train_pos ++ train_neg` with matching binary labels.
    pub fn train_pairs(&self) -> (Vec<Edge>, Vec<f64>) {
        labelled(&self.train_pos, &self.train_neg)
    }

    pub fn val_pairs(&self) -> (Vec<Edge>, Vec<f64>) {
        labelled(&self.val_pos, &self.val_neg)
    }

    pub fn test_pairs(&self) -> (Vec<Edge>, Vec<f64>) {
        labelled(&self.test_pos, &self.test_neg)
    }

    pub fn lists(&self) -> [&[Edge]; 6] {
        [
            &self.train_pos,
            &self.train_neg,
            &self.val_pos,
            &self.val_neg,
            &self.test_pos,
            &self.test_neg,
        ]
    }
}

fn labelled(pos: &[Edge], neg: &[Edge]) -> (Vec<Edge>, Vec<f64>) {
    let pairs = pos.iter().chain(neg).copied().collect();
    let labels = std::iter::repeat_n(1.0, pos.len())
        .chain(std::iter::repeat_n(0.0, neg.len()))
        .collect();
    (pairs, labels)
}

/// Splits with one negative per positive in every partition.
pub fn split_edges(g: &Graph, val_frac: f64, test_frac: f64, seed: u64) -> Result<EdgeSplit> {
    split_edges_with(g, val_frac, test_frac, 1.0, seed)
}

/// Random split of the positive edges; remainders of the fractional counts
/// go to training. `neg_ratio` negatives are drawn per positive.
pub fn split_edges_with(
    g: &Graph,
    val_frac: f64,
    test_frac: f64,
    neg_ratio: f64,
    seed: u64,
) -> Result<EdgeSplit> {
    let in_range = |f: f64| (0.0..1.0).contains(&f);
    if !in_range(val_frac) || !in_range(test_frac) || val_frac + test_frac >= 1.0 {
        return Err(DeaError::Domain(format!(
            "split fractions val={val_frac}, test={test_frac} must lie in [0,1) and sum below 1"
        )));
    }
    if !(neg_ratio >= 0.0 && neg_ratio.is_finite()) {
        return Err(DeaError::Domain(format!("negative ratio {neg_ratio} must be >= 0")));
    }
    let m = g.num_edges();
    if (val_frac > 0.0 || test_frac > 0.0) && m < 3 {
        return Err(DeaError::InsufficientEdges {
            needed: 3,
            available: m,
        });
    }
    let count = |frac: f64| (m as f64 * frac + 1e-9).floor() as usize;
    let (n_val, n_test) = (count(val_frac), count(test_frac));

    let streams = SeedStreams::new(seed);
    let mut shuffled = g.edges().to_vec();
    shuffled.shuffle(&mut streams.rng("split", 0));
    let val_pos = shuffled[..n_val].to_vec();
    let test_pos = shuffled[n_val..n_val + n_test].to_vec();
    let train_pos = shuffled[n_val + n_test..].to_vec();

    let negs = |k: usize| (k as f64 * neg_ratio).round() as usize;
    let (k_train, k_val, k_test) = (negs(train_pos.len()), negs(val_pos.len()), negs(test_pos.len()));
    let neg_seed = streams.rng("negatives", 0).gen::<u64>();
    let mut all_neg = sample_negatives(g, k_train + k_val + k_test, &HashSet::new(), neg_seed)?;
    let test_neg = all_neg.split_off(k_train + k_val);
    let val_neg = all_neg.split_off(k_train);
    let train_neg = all_neg;

    Ok(EdgeSplit {
        train_pos,
        train_neg,
        val_pos,
        val_neg,
        test_pos,
        test_neg,
    })
}

/// Uniformly samples `count` distinct unordered non-adjacent pairs that are
/// not in `exclude`.
pub fn sample_negatives(
    g: &Graph,
    count: usize,
    exclude: &HashSet<Edge>,
    seed: u64,
) -> Result<Vec<Edge>> {
    let edges = g.edge_set();
    let excluded_non_edges = exclude
        .iter()
        .map(|&(i, j)| canonical(i, j))
        .filter(|e| e.0 != e.1 && e.1 < g.num_nodes() && !edges.contains(e))
        .collect::<HashSet<_>>()
        .len();
    let available = g.num_non_edges() - excluded_non_edges;
    if count > available {
        return Err(DeaError::Capacity {
            requested: count,
            available,
        });
    }
    let blocked = |e: &Edge| edges.contains(e) || exclude.contains(e) || exclude.contains(&(e.1, e.0));
    let mut rng = seeded(seed);
    let n = g.num_nodes();

    if count.saturating_mul(2) <= available {
        let mut chosen = HashSet::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i == j {
                continue;
            }
            let e = canonical(i, j);
            if !blocked(&e) && chosen.insert(e) {
                out.push(e);
            }
        }
        Ok(out)
    } else {
        let mut candidates: Vec<Edge> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|e| !blocked(e))
            .collect();
        let (picked, _) = candidates.partial_shuffle(&mut rng, count);
        Ok(picked.to_vec())
    }
}
