//! Dyadic (edge-level) groups, parity metrics over them, and covariance
//! penalties between group indicators and prediction margins.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Trace, Var};
use crate::error::{DeaError, Result};
use crate::graph::Edge;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DyadicKind {
    /// Group 1 = intra (equal attributes), group 0 = inter.
    Mixed,
    /// One group per attribute value; an edge joins the group of each endpoint.
    Group,
    /// One group per unordered attribute pair `(a, b)`, `a <= b`.
    Subgroup,
}

impl DyadicKind {
    pub const ALL: [DyadicKind; 3] = [DyadicKind::Mixed, DyadicKind::Group, DyadicKind::Subgroup];
}

/// `(|S|+1)|S|/2`.
pub fn subgroup_count(num_sensitive: usize) -> usize {
    (num_sensitive + 1) * num_sensitive / 2
}

/// Dense id of the unordered pair `{a, b}` among `subgroup_count(s)` ids.
pub fn subgroup_id(a: usize, b: usize, num_sensitive: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * num_sensitive - a * a.saturating_sub(1) / 2 + (b - a)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DyadicGroups {
    pub kind: DyadicKind,
    /// Group ids per edge; two entries (possibly equal) for `Group`.
    pub memberships: Vec<Vec<usize>>,
    pub group_count: usize,
}

pub fn build_groups(edges: &[Edge], s: &[usize], num_sensitive: usize, kind: DyadicKind) -> Result<DyadicGroups> {
    for &(i, j) in edges {
        for v in [i, j] {
            let a = *s
                .get(v)
                .ok_or_else(|| DeaError::Validation(format!("node {v} has no sensitive value")))?;
            if a >= num_sensitive {
                return Err(DeaError::Validation(format!(
                    "sensitive value {a} at node {v} exceeds |S|={num_sensitive}"
                )));
            }
        }
    }
    let memberships = edges
        .iter()
        .map(|&(i, j)| {
            let (a, b) = (s[i], s[j]);
            match kind {
                DyadicKind::Mixed => vec![usize::from(a == b)],
                DyadicKind::Group => vec![a, b],
                DyadicKind::Subgroup => vec![subgroup_id(a, b, num_sensitive)],
            }
        })
        .collect();
    let group_count = match kind {
        DyadicKind::Mixed => 2,
        DyadicKind::Group => num_sensitive,
        DyadicKind::Subgroup => subgroup_count(num_sensitive),
    };
    Ok(DyadicGroups {
        kind,
        memberships,
        group_count,
    })
}

/// Largest minus smallest group rate, with the groups that were skipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub value: f64,
    pub skipped: Vec<usize>,
}

fn spread(rates: &[Option<f64>], what: &str) -> Result<Gap> {
    let valid: Vec<f64> = rates.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(DeaError::UndefinedMetric(format!("{what}: no group has enough edges")));
    }
    let max = valid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = valid.iter().copied().fold(f64::INFINITY, f64::min);
    let skipped = rates
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_none())
        .map(|(g, _)| g)
        .collect();
    Ok(Gap {
        value: max - min,
        skipped,
    })
}

fn check_len(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(DeaError::Shape {
            op,
            lhs: (a, 1),
            rhs: (b, 1),
        })
    }
}

/// Spread of positive-prediction rates across groups; empty groups skipped.
pub fn delta_dp(predictions: &[bool], groups: &DyadicGroups) -> Result<Gap> {
    check_len("delta_dp", predictions.len(), groups.memberships.len())?;
    let mut pos = vec![0usize; groups.group_count];
    let mut tot = vec![0usize; groups.group_count];
    for (&p, m) in predictions.iter().zip(&groups.memberships) {
        for &g in m {
            tot[g] += 1;
            pos[g] += usize::from(p);
        }
    }
    let rates: Vec<Option<f64>> = pos
        .iter()
        .zip(&tot)
        .map(|(&p, &t)| (t > 0).then(|| p as f64 / t as f64))
        .collect();
    spread(&rates, "demographic parity")
}

/// `max(ΔTPR, ΔFPR)` over groups holding both label classes.
pub fn delta_eo(predictions: &[bool], labels: &[f64], groups: &DyadicGroups) -> Result<Gap> {
    check_len("delta_eo", predictions.len(), groups.memberships.len())?;
    check_len("delta_eo", labels.len(), groups.memberships.len())?;
    let k = groups.group_count;
    let (mut tp, mut p, mut fp, mut n) = (vec![0usize; k], vec![0usize; k], vec![0usize; k], vec![0usize; k]);
    for ((&pred, &y), m) in predictions.iter().zip(labels).zip(&groups.memberships) {
        for &g in m {
            if y > 0.5 {
                p[g] += 1;
                tp[g] += usize::from(pred);
            } else {
                n[g] += 1;
                fp[g] += usize::from(pred);
            }
        }
    }
    let valid: Vec<bool> = (0..k).map(|g| p[g] > 0 && n[g] > 0).collect();
    let tpr: Vec<Option<f64>> = (0..k).map(|g| valid[g].then(|| tp[g] as f64 / p[g] as f64)).collect();
    let fpr: Vec<Option<f64>> = (0..k).map(|g| valid[g].then(|| fp[g] as f64 / n[g] as f64)).collect();
    let t = spread(&tpr, "equalized odds")?;
    let f = spread(&fpr, "equalized odds")?;
    Ok(Gap {
        value: t.value.max(f.value),
        skipped: t.skipped,
    })
}

/// `e(i,j) = 1[s_i = s_j]`.
pub fn mixed_indicator(edges: &[Edge], s: &[usize]) -> Vec<f64> {
    edges
        .iter()
        .map(|&(i, j)| if s[i] == s[j] { 1.0 } else { 0.0 })
        .collect()
}

/// `e^k(i,j) = 1[s_i = k or s_j = k]` for every attribute value `k`.
pub fn attribute_indicators(edges: &[Edge], s: &[usize], num_sensitive: usize) -> Vec<Vec<f64>> {
    (0..num_sensitive)
        .map(|k| {
            edges
                .iter()
                .map(|&(i, j)| if s[i] == k || s[j] == k { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

fn centered(e: &[f64]) -> Vec<f64> {
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    e.iter().map(|v| v - mean).collect()
}

fn covariance(tr: &mut Trace, scores: Var, delta: f64, weights: Vec<f64>, scale: f64) -> Result<Var> {
    let len = tr.shape(scores).0;
    if len == 0 {
        return Err(DeaError::Domain("covariance over an empty edge set".into()));
    }
    check_len("covariance", len, weights.len())?;
    let c = tr.constant_column(&weights);
    let beta = tr.add_scalar(scores, -delta);
    let prod = tr.mul(beta, c)?;
    let mean = tr.mean(prod);
    let mean = tr.scale(mean, scale);
    Ok(tr.abs(mean))
}

/// `|mean((e - ē)(ŷ - δ))|`.
pub fn cov_m(tr: &mut Trace, scores: Var, delta: f64, e: &[f64]) -> Result<Var> {
    if e.is_empty() {
        return Err(DeaError::Domain("covariance over an empty edge set".into()));
    }
    covariance(tr, scores, delta, centered(e), 1.0)
}

/// `|1/(|E||S|) Σ_edges Σ_k (e^k - ē^k)(ŷ - δ)|`.
pub fn cov_g(tr: &mut Trace, scores: Var, delta: f64, e_vectors: &[Vec<f64>]) -> Result<Var> {
    if e_vectors.len() < 2 {
        return Err(DeaError::Domain(format!(
            "averaged covariance needs |S| >= 2, got {}",
            e_vectors.len()
        )));
    }
    let len = e_vectors[0].len();
    if len == 0 {
        return Err(DeaError::Domain("covariance over an empty edge set".into()));
    }
    let mut total = vec![0.0; len];
    for e in e_vectors {
        check_len("cov_g", len, e.len())?;
        for (t, c) in total.iter_mut().zip(centered(e)) {
            *t += c;
        }
    }
    covariance(tr, scores, delta, total, 1.0 / e_vectors.len() as f64)
}

/// Test-set utility and parity metrics of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub accuracy: f64,
    pub auc: f64,
    pub dp_mixed: f64,
    pub eo_mixed: f64,
    pub dp_group: f64,
    pub eo_group: f64,
    pub dp_subgroup: f64,
    pub eo_subgroup: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl FairnessReport {
    pub const METRICS: [&'static str; 8] = [
        "accuracy",
        "auc",
        "dp_mixed",
        "eo_mixed",
        "dp_group",
        "eo_group",
        "dp_subgroup",
        "eo_subgroup",
    ];

    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "accuracy" => self.accuracy,
            "auc" => self.auc,
            "dp_mixed" => self.dp_mixed,
            "eo_mixed" => self.eo_mixed,
            "dp_group" => self.dp_group,
            "eo_group" => self.eo_group,
            "dp_subgroup" => self.dp_subgroup,
            "eo_subgroup" => self.eo_subgroup,
            "threshold" => self.threshold,
            _ => return None,
        })
    }
}

/// Metrics of `scores` on labelled `pairs`, predicting a link when `score >= delta`.
pub fn fairness_report(
    scores: &[f64],
    labels: &[f64],
    pairs: &[Edge],
    s: &[usize],
    num_sensitive: usize,
    delta: f64,
    seed: u64,
) -> Result<FairnessReport> {
    check_len("fairness_report", scores.len(), labels.len())?;
    check_len("fairness_report", scores.len(), pairs.len())?;
    let preds: Vec<bool> = scores.iter().map(|&p| p >= delta).collect();
    let mut dp = [0.0; 3];
    let mut eo = [0.0; 3];
    for (k, kind) in DyadicKind::ALL.into_iter().enumerate() {
        let groups = build_groups(pairs, s, num_sensitive, kind)?;
        let d = delta_dp(&preds, &groups)?;
        let e = delta_eo(&preds, labels, &groups)?;
        if !d.skipped.is_empty() || !e.skipped.is_empty() {
            log::warn!(
                "{kind:?} dyadic groups skipped (empty: {:?}, single-class: {:?})",
                d.skipped,
                e.skipped
            );
        }
        dp[k] = d.value;
        eo[k] = e.value;
    }
    Ok(FairnessReport {
        accuracy: crate::gnn::accuracy(scores, labels, delta),
        auc: crate::gnn::auc(scores, labels)?,
        dp_mixed: dp[0],
        eo_mixed: eo[0],
        dp_group: dp[1],
        eo_group: eo[1],
        dp_subgroup: dp[2],
        eo_subgroup: eo[2],
        threshold: delta,
        seed,
    })
}
