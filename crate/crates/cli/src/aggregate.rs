//! Mean and population standard deviation across runs.

use std::fmt::Write as _;

use anyhow::{bail, Result};

/// Metric name/value pairs of one run, in output column order.
pub type MetricRow = Vec<(String, f64)>;

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub metric: String,
    pub mean: f64,
    /// Population standard deviation (divides by n).
    pub std: f64,
    pub runs: usize,
}

/// Rows must share the same metric names in the same order.
pub fn aggregate(rows: &[MetricRow]) -> Result<Vec<Aggregate>> {
    let Some(first) = rows.first() else {
        bail!("no runs to aggregate");
    };
    let names: Vec<&str> = first.iter().map(|(k, _)| k.as_str()).collect();
    for (r, row) in rows.iter().enumerate().skip(1) {
        let other: Vec<&str> = row.iter().map(|(k, _)| k.as_str()).collect();
        if other != names {
            bail!("run {r} has metrics {other:?}, expected {names:?}");
        }
    }
    let n = rows.len() as f64;
    Ok(names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let mean = rows.iter().map(|row| row[c].1).sum::<f64>() / n;
            let var = rows.iter().map(|row| (row[c].1 - mean).powi(2)).sum::<f64>() / n;
            Aggregate {
                metric: name.to_string(),
                mean,
                std: var.sqrt(),
                runs: rows.len(),
            }
        })
        .collect())
}

pub fn text_table(aggs: &[Aggregate]) -> String {
    let width = aggs.iter().map(|a| a.metric.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:>10}  {:>10}  {:>4}   (std = population)\n", "metric", "mean", "std", "n");
    for a in aggs {
        let _ = writeln!(out, "{:<width$}  {:>10.4}  {:>10.4}  {:>4}", a.metric, a.mean, a.std, a.runs);
    }
    out
}
