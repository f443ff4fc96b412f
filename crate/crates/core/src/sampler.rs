//! Learnable edge sampler: an MLP scores each original edge from its endpoint
//! embeddings, Gumbel-sigmoid noise relaxes the scores, and a hard threshold
//! with a straight-through gradient yields a deletion-only mask.

use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::distributions::Open01;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{BoundParams, ParamStore, Trace, Var};
use crate::error::{DeaError, Result};
use crate::gnn::{glorot, PairIndex};
use crate::graph::{normalize, Edge, NormalizedOperator};
use crate::rng::{seeded, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Difference of two standard Gumbel draws (Logistic(0,1)).
    Logistic,
    SingleGumbel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub hidden: usize,
    pub noise: NoiseKind,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Initial output bias; positive values start with nearly every edge kept.
    pub init_bias: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            noise: NoiseKind::Logistic,
            tau_start: 5.0,
            tau_end: 1.0,
            init_bias: 2.0,
        }
    }
}

/// MLP parameters under `sampler.*`. The first layer is stored split by
/// endpoint (`w1a` for `h_i`, `w1b` for `h_j`), which equals one layer on
/// `[h_i ‖ h_j]` with weight `[w1a; w1b]`.
pub fn init_sampler(in_dim: usize, cfg: &SamplerConfig, rng: &mut Rng) -> ParamStore {
    let h = cfg.hidden;
    let w1 = glorot(2 * in_dim, h, rng);
    let mut p = ParamStore::new();
    p.insert("sampler.w1a", w1.slice(ndarray::s![..in_dim, ..]).to_owned());
    p.insert("sampler.w1b", w1.slice(ndarray::s![in_dim.., ..]).to_owned());
    p.insert("sampler.b1", Array2::zeros((1, h)));
    p.insert("sampler.w2", glorot(h, h, rng));
    p.insert("sampler.b2", Array2::zeros((1, h)));
    p.insert("sampler.w3", glorot(h, 1, rng));
    p.insert("sampler.b3", Array2::from_elem((1, 1), cfg.init_bias));
    p
}

/// Edge logits `z = MLP([h_i ‖ h_j])` for canonical `(i, j)`, `i < j`, with
/// ELU hidden activations.
pub fn edge_logits(tr: &mut Trace, params: &BoundParams, h: Var, edges: &PairIndex) -> Result<Var> {
    let a = tr.matmul(h, params.get("sampler.w1a"))?;
    let b = tr.matmul(h, params.get("sampler.w1b"))?;
    let a = tr.gather_rows(a, edges.left.clone())?;
    let b = tr.gather_rows(b, edges.right.clone())?;
    let x = tr.add(a, b)?;
    let x = tr.add(x, params.get("sampler.b1"))?;
    let x = tr.elu(x, 1.0);
    let x = tr.matmul(x, params.get("sampler.w2"))?;
    let x = tr.add(x, params.get("sampler.b2"))?;
    let x = tr.elu(x, 1.0);
    let z = tr.matmul(x, params.get("sampler.w3"))?;
    tr.add(z, params.get("sampler.b3"))
}

fn standard_gumbel(rng: &mut Rng) -> f64 {
    let u: f64 = rng.sample(Open01);
    -(-u.ln()).ln()
}

/// One noise draw per edge.
pub fn sample_noise(len: usize, kind: NoiseKind, rng: &mut Rng) -> Vec<f64> {
    (0..len)
        .map(|_| match kind {
            NoiseKind::Logistic => standard_gumbel(rng) - standard_gumbel(rng),
            NoiseKind::SingleGumbel => standard_gumbel(rng),
        })
        .collect()
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(DeaError::Domain(format!("temperature must be positive, got {tau}")))
    }
}

/// Soft mask `σ((z + g)/τ)` for a fixed noise realization `g`.
pub fn gumbel_sigmoid(tr: &mut Trace, z: Var, tau: f64, noise: &[f64]) -> Result<Var> {
    check_tau(tau)?;
    let g = tr.constant_column(noise);
    let shifted = tr.add(z, g)?;
    let scaled = tr.scale(shifted, 1.0 / tau);
    Ok(tr.sigmoid(scaled))
}

/// Soft mask values for plain logits with noise drawn from `seed`.
pub fn gumbel_sigmoid_values(z: &[f64], tau: f64, seed: u64, kind: NoiseKind) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let noise = sample_noise(z.len(), kind, &mut seeded(seed));
    let mut tr = Trace::new();
    let zv = tr.constant_column(z);
    let m = gumbel_sigmoid(&mut tr, zv, tau, &noise)?;
    Ok(tr.value(m).column(0).to_vec())
}

/// Hard mask `1[m̃ >= 0.5]` whose backward pass is the identity.
pub fn discretize_ste(tr: &mut Trace, soft: Var) -> Var {
    tr.straight_through(soft)
}

/// Noise-free mask used at evaluation: `1[σ(z/τ) >= 0.5]`, i.e. `1[z >= 0]`.
pub fn eval_mask(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| if v >= 0.0 { 1.0 } else { 0.0 }).collect()
}

/// Linear decay from 5 at the first epoch to 1 at the last.
pub fn temperature(epoch: usize, total_epochs: usize) -> f64 {
    temperature_between(epoch, total_epochs, 5.0, 1.0)
}

pub fn temperature_between(epoch: usize, total_epochs: usize, start: f64, end: f64) -> f64 {
    if total_epochs < 2 {
        return end;
    }
    start - (start - end) * epoch as f64 / (total_epochs - 1) as f64
}

/// Retained edges and their renormalized operator.
pub fn masked_adjacency(n: usize, edges: &[Edge], hard: &[f64]) -> Result<(Vec<Edge>, NormalizedOperator)> {
    if hard.len() != edges.len() {
        return Err(DeaError::Shape {
            op: "masked_adjacency",
            lhs: (edges.len(), 1),
            rhs: (hard.len(), 1),
        });
    }
    let kept: Vec<Edge> = edges
        .iter()
        .zip(hard)
        .filter(|(_, &m)| m >= 0.5)
        .map(|(e, _)| *e)
        .collect();
    let op = normalize(&kept, n)?;
    Ok((kept, op))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub kept: usize,
    pub removed: usize,
    pub removed_fraction: f64,
}

impl MaskSummary {
    pub fn of(hard: &[f64]) -> Self {
        let kept = hard.iter().filter(|&&m| m >= 0.5).count();
        let removed = hard.len() - kept;
        let removed_fraction = if hard.is_empty() {
            0.0
        } else {
            removed as f64 / hard.len() as f64
        };
        Self {
            kept,
            removed,
            removed_fraction,
        }
    }
}

/// Writes `i j keep` lines and returns the summary.
pub fn write_mask(path: &Path, edges: &[Edge], hard: &[f64]) -> Result<MaskSummary> {
    let mut text = Vec::new();
    for (&(i, j), &m) in edges.iter().zip(hard) {
        writeln!(text, "{i} {j} {}", u8::from(m >= 0.5)).expect("in-memory write");
    }
    std::fs::write(path, text).map_err(|e| DeaError::io(path, e))?;
    Ok(MaskSummary::of(hard))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeOperator;

    #[test]
    fn temperature_schedule() {
        assert_eq!(temperature(0, 100), 5.0);
        assert_eq!(temperature(99, 100), 1.0);
        assert!((temperature(49, 100) - (5.0 - 4.0 * 49.0 / 99.0)).abs() < 1e-15);
        assert!((temperature(49, 100) - 3.0202).abs() < 1e-4);
        assert_eq!(temperature(0, 1), 1.0);
    }

    #[test]
    fn non_positive_tau_is_rejected() {
        assert!(matches!(gumbel_sigmoid_values(&[0.0], 0.0, 1, NoiseKind::Logistic), Err(DeaError::Domain(_))));
        assert!(gumbel_sigmoid_values(&[0.0], -1.0, 1, NoiseKind::Logistic).is_err());
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let mut p = init_sampler(3, &SamplerConfig { init_bias: 0.0, hidden: 4, ..Default::default() }, &mut seeded(0));
        for name in ["sampler.w1a", "sampler.w1b", "sampler.w2", "sampler.w3"] {
            p.get_mut(name).unwrap().fill(0.0);
        }
        let mut tr = Trace::new();
        let b = p.bind(&mut tr);
        let h = tr.constant(Array2::from_elem((4, 3), 0.7));
        let z = edge_logits(&mut tr, &b, h, &PairIndex::new(&[(0, 1), (2, 3)])).unwrap();
        assert_eq!(tr.value(z).column(0).to_vec(), vec![0.0, 0.0]);
    }

    fn elu(x: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            x.exp_m1()
        }
    }

    #[test]
    fn logits_match_dense_mlp_oracle() {
        let mut rng = seeded(21);
        let cfg = SamplerConfig { hidden: 6, ..Default::default() };
        let p = init_sampler(4, &cfg, &mut rng);
        let h = glorot(5, 4, &mut rng);
        let edges = vec![(0, 1), (1, 4), (2, 3), (0, 4)];
        let w1 = ndarray::concatenate(
            ndarray::Axis(0),
            &[p.get("sampler.w1a").unwrap().view(), p.get("sampler.w1b").unwrap().view()],
        )
        .unwrap();
        let mut tr = Trace::new();
        let b = p.bind(&mut tr);
        let hv = tr.constant(h.clone());
        let z = edge_logits(&mut tr, &b, hv, &PairIndex::new(&edges)).unwrap();
        for (k, &(i, j)) in edges.iter().enumerate() {
            let input: Vec<f64> = h.row(i).iter().chain(h.row(j).iter()).copied().collect();
            let mut a1 = vec![0.0; 6];
            for (c, slot) in a1.iter_mut().enumerate() {
                let mut s = p.get("sampler.b1").unwrap()[[0, c]];
                for (r, x) in input.iter().enumerate() {
                    s += x * w1[[r, c]];
                }
                *slot = elu(s);
            }
            let mut a2 = vec![0.0; 6];
            for (c, slot) in a2.iter_mut().enumerate() {
                let mut s = p.get("sampler.b2").unwrap()[[0, c]];
                for (r, x) in a1.iter().enumerate() {
                    s += x * p.get("sampler.w2").unwrap()[[r, c]];
                }
                *slot = elu(s);
            }
            let mut out = p.get("sampler.b3").unwrap()[[0, 0]];
            for (r, x) in a2.iter().enumerate() {
                out += x * p.get("sampler.w3").unwrap()[[r, 0]];
            }
            assert!((tr.value(z)[[k, 0]] - out).abs() < 1e-12);
        }
        // the concatenation order matters
        let swapped = edge_logits(&mut tr, &b, hv, &PairIndex::new(&[(1, 0)])).unwrap();
        assert_ne!(tr.value(swapped)[[0, 0]], tr.value(z)[[0, 0]]);
    }

    #[test]
    fn deterministic_noise_and_sharpening() {
        let z = [0.3, -1.2, 2.0, 0.0];
        let a = gumbel_sigmoid_values(&z, 1.0, 5, NoiseKind::Logistic).unwrap();
        assert_eq!(a, gumbel_sigmoid_values(&z, 1.0, 5, NoiseKind::Logistic).unwrap());
        let warm = gumbel_sigmoid_values(&z, 5.0, 5, NoiseKind::Logistic).unwrap();
        let cold = gumbel_sigmoid_values(&z, 0.1, 5, NoiseKind::Logistic).unwrap();
        for (w, c) in warm.iter().zip(&cold) {
            assert!((c - 0.5).abs() > (w - 0.5).abs());
            assert!(*w > 0.0 && *w < 1.0);
        }
    }

    #[test]
    fn confident_logit_at_low_temperature() {
        let z = vec![10.0; 20_000];
        let m = gumbel_sigmoid_values(&z, 0.1, 77, NoiseKind::Logistic).unwrap();
        let frac = m.iter().filter(|&&v| v > 0.99).count() as f64 / m.len() as f64;
        // P(z + G > 0.1·logit(0.99)) for logistic G
        let t = 0.1 * (0.99f64 / 0.01).ln() - 10.0;
        let want = 1.0 - 1.0 / (1.0 + (-t).exp());
        assert!(frac > 0.99 && (frac - want).abs() < 0.005, "{frac} vs {want}");
    }

    #[test]
    fn threshold_boundary_and_identity_gradient() {
        let mut tr = Trace::new();
        let soft = tr.param(Array2::from_shape_vec((3, 1), vec![0.49, 0.5, 0.51]).unwrap());
        let hard = discretize_ste(&mut tr, soft);
        assert_eq!(tr.value(hard).column(0).to_vec(), vec![0.0, 1.0, 1.0]);
        let l = tr.sum(hard);
        let g = tr.backward(l).unwrap();
        assert_eq!(g.get(soft).unwrap().column(0).to_vec(), vec![1.0; 3]);
    }

    #[test]
    fn masked_adjacency_cases() {
        let edges = vec![(0, 1), (1, 2), (2, 3), (0, 3)];
        let (kept, op) = masked_adjacency(4, &edges, &[1.0; 4]).unwrap();
        assert_eq!(kept, edges);
        assert_eq!(op, normalize(&edges, 4).unwrap());
        let (kept, op) = masked_adjacency(4, &edges, &[0.0; 4]).unwrap();
        assert!(kept.is_empty());
        assert_eq!(op.to_dense(), Array2::<f64>::eye(4));
        let mask = [1.0, 0.0, 1.0, 0.0];
        let (_, op) = masked_adjacency(4, &edges, &mask).unwrap();
        assert_eq!(op, EdgeOperator::from_mask(4, &edges, &mask).to_operator(Some(&mask)));
    }

    #[test]
    fn mask_export() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.txt");
        let s = write_mask(&path, &[(0, 1), (1, 2), (0, 2), (2, 3)], &[1.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "0 1 1\n1 2 0\n0 2 1\n2 3 1\n");
        assert_eq!(s, MaskSummary { kept: 3, removed: 1, removed_fraction: 0.25 });
    }
}
