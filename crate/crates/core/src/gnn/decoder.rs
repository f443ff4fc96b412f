use std::sync::Arc;

use crate::autodiff::{Trace, Var};
use crate::error::{DeaError, Result};
use crate::graph::Edge;

/// Probabilities are clamped to `[EPS, 1-EPS]` inside the log-loss.
pub const BCE_EPS: f64 = 1e-12;

/// Endpoint index columns for a list of node pairs.
#[derive(Clone, Debug)]
pub struct PairIndex {
    pub left: Arc<Vec<usize>>,
    pub right: Arc<Vec<usize>>,
}

impl PairIndex {
    pub fn new(pairs: &[Edge]) -> Self {
        Self {
            left: Arc::new(pairs.iter().map(|p| p.0).collect()),
            right: Arc::new(pairs.iter().map(|p| p.1).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }
}

/// `σ(⟨h_i, h_j⟩)` per pair, as a column.
pub fn decode(tr: &mut Trace, h: Var, pairs: &PairIndex) -> Result<Var> {
    let hi = tr.gather_rows(h, pairs.left.clone())?;
    let hj = tr.gather_rows(h, pairs.right.clone())?;
    let dot = tr.row_dot(hi, hj)?;
    Ok(tr.sigmoid(dot))
}

/// Mean binary cross-entropy of a score column against 0/1 labels.
pub fn bce_loss(tr: &mut Trace, scores: Var, labels: &[f64]) -> Result<Var> {
    let shape = tr.shape(scores);
    if shape != (labels.len(), 1) {
        return Err(DeaError::Shape {
            op: "bce_loss",
            lhs: shape,
            rhs: (labels.len(), 1),
        });
    }
    let p = tr.clamp(scores, BCE_EPS, 1.0 - BCE_EPS);
    let y = tr.constant_column(labels);
    let not_y: Vec<f64> = labels.iter().map(|y| 1.0 - y).collect();
    let not_y = tr.constant_column(&not_y);
    let log_p = tr.log(p);
    let q = tr.scale(p, -1.0);
    let q = tr.add_scalar(q, 1.0);
    let log_q = tr.log(q);
    let a = tr.mul(log_p, y)?;
    let b = tr.mul(log_q, not_y)?;
    let s = tr.add(a, b)?;
    let m = tr.mean(s);
    Ok(tr.scale(m, -1.0))
}

/// Area under the ROC curve via average ranks; ties count one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(DeaError::Shape {
            op: "auc",
            lhs: (scores.len(), 1),
            rhs: (labels.len(), 1),
        });
    }
    let n_pos = labels.iter().filter(|&&y| y > 0.5).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(DeaError::UndefinedMetric(format!(
            "AUC needs both classes ({n_pos} positives, {n_neg} negatives)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of 1-based average ranks of the positives
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_tie = order[start..end].iter().filter(|&&k| labels[k] > 0.5).count();
        pos_rank_sum += avg_rank * pos_in_tie as f64;
        start = end;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Fraction of pairs whose prediction `score >= delta` matches the label.
pub fn accuracy(scores: &[f64], labels: &[f64], delta: f64) -> f64 {
    if scores.is_empty() {
        return f64::NAN;
    }
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| (s >= delta) == (y > 0.5))
        .count();
    correct as f64 / scores.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::Array2;
    use rand::Rng;

    #[test]
    fn orthogonal_embeddings_score_half() {
        let mut tr = Trace::new();
        let h = tr.constant(Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 0.0, 3.0]).unwrap());
        let s = decode(&mut tr, h, &PairIndex::new(&[(0, 1), (1, 0)])).unwrap();
        assert_eq!(tr.value(s).column(0).to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn decode_matches_dense_oracle() {
        let mut rng = seeded(3);
        let h = Array2::from_shape_fn((8, 5), |_| rng.gen_range(-1.0..1.0));
        let pairs: Vec<Edge> = (0..20).map(|_| (rng.gen_range(0..8), rng.gen_range(0..8))).collect();
        let dense = h.dot(&h.t()).mapv(|v: f64| 1.0 / (1.0 + (-v).exp()));
        let mut tr = Trace::new();
        let hv = tr.constant(h.clone());
        let s = decode(&mut tr, hv, &PairIndex::new(&pairs)).unwrap();
        let swapped: Vec<Edge> = pairs.iter().map(|&(i, j)| (j, i)).collect();
        let s2 = decode(&mut tr, hv, &PairIndex::new(&swapped)).unwrap();
        for (k, &(i, j)) in pairs.iter().enumerate() {
            assert!((tr.value(s)[[k, 0]] - dense[[i, j]]).abs() < 1e-12);
            assert_eq!(tr.value(s)[[k, 0]], tr.value(s2)[[k, 0]]);
        }
    }

    #[test]
    fn bce_values() {
        let mut tr = Trace::new();
        let p = tr.constant_column(&[0.5, 0.5]);
        let l = bce_loss(&mut tr, p, &[1.0, 0.0]).unwrap();
        assert!((tr.scalar(l) - std::f64::consts::LN_2).abs() < 1e-15);
        let p = tr.constant_column(&[1.0, 0.0]);
        let l = bce_loss(&mut tr, p, &[1.0, 0.0]).unwrap();
        assert!(tr.scalar(l) <= 1e-11);
        assert!(matches!(bce_loss(&mut tr, p, &[1.0]), Err(DeaError::Shape { .. })));

        let mut rng = seeded(5);
        let s: Vec<f64> = (0..30).map(|_| rng.gen_range(0.01..0.99)).collect();
        let y: Vec<f64> = (0..30).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let mut want = 0.0;
        for (p, y) in s.iter().zip(&y) {
            want -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        want /= 30.0;
        let p = tr.constant_column(&s);
        let l = bce_loss(&mut tr, p, &y).unwrap();
        assert!((tr.scalar(l) - want).abs() < 1e-12);
    }

    fn pairwise_auc(s: &[f64], y: &[f64]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] > 0.5 && y[j] < 0.5 {
                    den += 1.0;
                    num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[1.0, 1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[1.0, 1.0]), Err(DeaError::UndefinedMetric(_))));
        let mut rng = seeded(12);
        for _ in 0..20 {
            // coarse scores to force ties
            let s: Vec<f64> = (0..50).map(|_| (rng.gen_range(0..10) as f64) / 10.0).collect();
            let mut y: Vec<f64> = (0..50).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect();
            y[0] = 1.0;
            y[1] = 0.0;
            assert_eq!(auc(&s, &y).unwrap(), pairwise_auc(&s, &y));
        }
    }

    #[test]
    fn accuracy_threshold_is_inclusive() {
        assert_eq!(accuracy(&[0.5, 0.49], &[1.0, 0.0], 0.5), 1.0);
        assert_eq!(accuracy(&[0.5, 0.49], &[0.0, 1.0], 0.5), 0.0);
    }
}
