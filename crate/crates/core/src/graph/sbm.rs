use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{spectral_features, Edge, Graph};
use crate::error::{DeaError, Result};
use crate::rng::SeedStreams;

const MAX_ATTEMPTS: u64 = 10;

/// Stochastic block model where the block index is the sensitive attribute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub groups: Vec<usize>,
    pub p_intra: f64,
    pub p_inter: f64,
    /// Number of Laplacian eigenvectors attached as features (0 = none).
    pub feature_dim: usize,
    pub seed: u64,
}

impl SbmConfig {
    pub fn num_nodes(&self) -> usize {
        self.groups.iter().sum()
    }

    pub fn generate(&self) -> Result<Graph> {
        generate_sbm(
            self.num_nodes(),
            &self.groups,
            self.p_intra,
            self.p_inter,
            self.feature_dim,
            self.seed,
        )
    }
}

pub fn generate_sbm(
    n: usize,
    groups: &[usize],
    p_intra: f64,
    p_inter: f64,
    d: usize,
    seed: u64,
) -> Result<Graph> {
    if groups.iter().sum::<usize>() != n {
        return Err(DeaError::Validation(format!(
            "group sizes {groups:?} do not sum to n={n}"
        )));
    }
    if groups.len() < 2 {
        return Err(DeaError::Validation(
            "an SBM needs at least two blocks (the sensitive attribute)".into(),
        ));
    }
    if !(0.0..=1.0).contains(&p_intra) || !(0.0..=1.0).contains(&p_inter) || p_inter > p_intra {
        return Err(DeaError::Domain(format!(
            "need 0 <= p_inter <= p_intra <= 1, got p_intra={p_intra}, p_inter={p_inter}"
        )));
    }
    let block: Vec<usize> = groups
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();

    let streams = SeedStreams::new(seed);
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = streams.rng("sbm", attempt);
        let mut edges: Vec<Edge> = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let p = if block[i] == block[j] { p_intra } else { p_inter };
                if rng.gen::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        if edges.is_empty() {
            continue;
        }
        let mut g = Graph::new(n, edges, block.clone(), groups.len(), None)?;
        if d > 0 {
            let x = spectral_features(&g, d, 1e-6)?;
            g.set_features(x)?;
        }
        return Ok(g);
    }
    Err(DeaError::EmptyGraph {
        attempts: MAX_ATTEMPTS as usize,
    })
}
