use rand::Rng as _;

use crate::graph::Edge;
use crate::rng::seeded;

/// Keeps each edge independently with probability `1 - p`.
pub fn dropedge(edges: &[Edge], p: f64, seed: u64) -> Vec<Edge> {
    let mut rng = seeded(seed);
    edges.iter().copied().filter(|_| rng.gen::<f64>() >= p).collect()
}

/// Drops intra-group edges with `p_intra` and inter-group edges with `p_inter`.
pub fn biased_dropout(edges: &[Edge], s: &[usize], p_intra: f64, p_inter: f64, seed: u64) -> Vec<Edge> {
    let mut rng = seeded(seed);
    edges
        .iter()
        .copied()
        .filter(|&(i, j)| {
            let p = if s[i] == s[j] { p_intra } else { p_inter };
            rng.gen::<f64>() >= p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(m: usize) -> Vec<Edge> {
        (0..m).map(|i| (i, i + 1)).collect()
    }

    fn within_3_sigma(count: usize, trials: usize, p: f64) -> bool {
        let mean = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        (count as f64 - mean).abs() <= 3.0 * sd
    }

    #[test]
    fn dropedge_limits_and_binomial_count() {
        let e = ring(1000);
        assert_eq!(dropedge(&e, 0.0, 1), e);
        assert!(dropedge(&e, 1.0, 1).is_empty());
        assert!(within_3_sigma(dropedge(&e, 0.3, 4).len(), 1000, 0.7));
    }

    #[test]
    fn biased_dropout_counts() {
        let e = ring(1000);
        let s: Vec<usize> = (0..1001).map(|i| (i / 2) % 2).collect();
        let intra = e.iter().filter(|&&(i, j)| s[i] == s[j]).count();
        let only_inter = biased_dropout(&e, &s, 1.0, 0.0, 3);
        assert!(only_inter.iter().all(|&(i, j)| s[i] != s[j]));
        assert_eq!(only_inter.len(), 1000 - intra);
        let kept = biased_dropout(&e, &s, 0.4, 0.1, 9);
        let kept_intra = kept.iter().filter(|&&(i, j)| s[i] == s[j]).count();
        assert!(within_3_sigma(kept_intra, intra, 0.6));
        assert!(within_3_sigma(kept.len() - kept_intra, 1000 - intra, 0.9));
        assert_eq!(biased_dropout(&e, &s, 0.3, 0.3, 5), dropedge(&e, 0.3, 5));
    }
}
