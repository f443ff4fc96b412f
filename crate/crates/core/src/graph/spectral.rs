//! Eigenvectors of the symmetric normalized Laplacian
//! `L = I - D̃^{-1/2}(A+I)D̃^{-1/2}` used as structural node features.
//!
//! Graphs up to [`DENSE_LIMIT`] nodes use a dense Householder + implicit QL
//! solve. Larger graphs use Lanczos with full reorthogonalization, restarting
//! from the best Ritz vector and locking converged pairs.

use ndarray::{Array2, ArrayView1};
use rand::Rng as _;

use super::{normalize, Graph, NormalizedOperator};
use crate::error::{DeaError, Result};
use crate::rng::seeded;

pub const DENSE_LIMIT: usize = 1024;

#[derive(Clone, Debug)]
pub struct SpectralOptions {
    /// Residual bound `‖Lv − λv‖` each returned pair must meet.
    pub tol: f64,
    /// Matrix-vector product budget for Lanczos; defaults to `10·n`.
    pub max_iter: Option<usize>,
    /// Use Lanczos even below the dense limit.
    pub force_lanczos: bool,
    /// Seed of the Lanczos start vector.
    pub seed: u64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: None,
            force_lanczos: false,
            seed: 0x5eed,
        }
    }
}

/// `k` unit-norm eigenvectors for the `k` smallest eigenvalues, as an `n×k` matrix.
pub fn spectral_features(g: &Graph, k: usize, tol: f64) -> Result<Array2<f64>> {
    let opts = SpectralOptions {
        tol,
        ..Default::default()
    };
    Ok(spectral_pairs(g, k, &opts)?.1)
}

/// Smallest `k` eigenpairs, eigenvalues ascending.
pub fn spectral_pairs(g: &Graph, k: usize, opts: &SpectralOptions) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = g.num_nodes();
    if k == 0 || k >= n {
        return Err(DeaError::Domain(format!("need 1 <= k < n, got k={k}, n={n}")));
    }
    let op = normalize(g.edges(), n)?;
    let (vals, mut vecs) = if n <= DENSE_LIMIT && !opts.force_lanczos {
        let (vals, vecs) = symmetric_eigen(&laplacian_from(&op))?;
        (vals[..k].to_vec(), vecs.slice(ndarray::s![.., ..k]).to_owned())
    } else {
        let budget = opts.max_iter.unwrap_or(10 * n);
        lanczos_smallest(&op, k, opts.tol, budget, opts.seed)?
    };
    for mut col in vecs.columns_mut() {
        let norm = col.dot(&col).sqrt();
        col /= norm;
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, v| if v.abs() > best.abs() + 1e-12 { v } else { best });
        if pivot < 0.0 {
            col *= -1.0;
        }
    }
    let worst = (0..k)
        .map(|c| residual(&op, vecs.column(c), vals[c]))
        .fold(0.0, f64::max);
    if worst > opts.tol {
        return Err(DeaError::Convergence {
            residual: worst,
            iterations: 0,
        });
    }
    Ok((vals, vecs))
}

/// Dense normalized Laplacian.
pub fn laplacian_dense(g: &Graph) -> Result<Array2<f64>> {
    Ok(laplacian_from(&normalize(g.edges(), g.num_nodes())?))
}

fn laplacian_from(op: &NormalizedOperator) -> Array2<f64> {
    let mut l = -op.to_dense();
    for i in 0..op.dim() {
        l[[i, i]] += 1.0;
    }
    l
}

fn apply_laplacian(op: &NormalizedOperator, v: &[f64]) -> Vec<f64> {
    let x = ArrayView1::from(v).insert_axis(ndarray::Axis(1));
    let av = op.matmul(x);
    v.iter().zip(av.iter()).map(|(a, b)| a - b).collect()
}

fn residual(op: &NormalizedOperator, v: ArrayView1<'_, f64>, lambda: f64) -> f64 {
    let v = v.to_vec();
    let lv = apply_laplacian(op, &v);
    lv.iter()
        .zip(&v)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Full eigendecomposition of a symmetric matrix: ascending eigenvalues and
/// the matching orthonormal eigenvectors as columns.
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(DeaError::Shape {
            op: "symmetric_eigen",
            lhs: a.dim(),
            rhs: (n, n),
        });
    }
    if n == 0 {
        return Ok((vec![], Array2::zeros((0, 0))));
    }
    let mut v: Vec<Vec<f64>> = a.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    // tql2 rotates columns of V; work on the transpose so rotations touch rows.
    let mut vt = transpose(&v);
    tql2(&mut vt, &mut d, &mut e)?;
    Ok(sorted_pairs(d, &vt))
}

fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Array2<f64>)> {
    let m = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; m];
    e[1..m].copy_from_slice(&off[..m - 1]);
    let mut vt: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    tql2(&mut vt, &mut d, &mut e)?;
    Ok(sorted_pairs(d, &vt))
}

fn sorted_pairs(d: Vec<f64>, vt: &[Vec<f64>]) -> (Vec<f64>, Array2<f64>) {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let vals = order.iter().map(|&i| d[i]).collect();
    let vecs = Array2::from_shape_fn((n, n), |(r, c)| vt[order[c]][r]);
    (vals, vecs)
}

fn transpose(v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = v.len();
    (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect()
}

/// Householder reduction to tridiagonal form (EISPACK tred2 ordering).
fn tred2(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[n - 1][j];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in j + 1..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for row in v.iter_mut().take(i + 1) {
            row[i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on a tridiagonal matrix; `vt` holds eigenvectors as rows.
fn tql2(vt: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    let max_sweeps = 60;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_sweeps {
                    return Err(DeaError::Convergence {
                        residual: e[l].abs(),
                        iterations: iter,
                    });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = vt.split_at_mut(i + 1);
                    let (row_i, row_i1) = (&mut lo[i], &mut hi[0]);
                    for (a, b) in row_i.iter_mut().zip(row_i1.iter_mut()) {
                        let h = *b;
                        *b = s * *a + c * h;
                        *a = c * *a - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonalize(w: &mut [f64], against: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in against {
            let c = dot(w, q);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= c * qi;
            }
        }
    }
}

fn lanczos_smallest(
    op: &NormalizedOperator,
    k: usize,
    tol: f64,
    budget: usize,
    seed: u64,
) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = op.dim();
    let basis_limit = n.min((4 * k + 60).max(100));
    let mut rng = seeded(seed);
    let mut locked_vals: Vec<f64> = Vec::new();
    let mut locked: Vec<Vec<f64>> = Vec::new();
    let mut start: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let mut used = 0usize;
    let mut last_residual = f64::INFINITY;

    while locked.len() < k {
        orthogonalize(&mut start, &locked);
        let mut norm = dot(&start, &start).sqrt();
        if norm < 1e-10 {
            start = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            orthogonalize(&mut start, &locked);
            norm = dot(&start, &start).sqrt();
        }
        let mut q: Vec<Vec<f64>> = vec![start.iter().map(|x| x / norm).collect()];
        let mut alpha = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let m = basis_limit.min(n - locked.len()).min(budget.saturating_sub(used).max(1));
        for j in 0..m {
            let mut w = apply_laplacian(op, &q[j]);
            used += 1;
            let a = dot(&w, &q[j]);
            alpha.push(a);
            orthogonalize(&mut w, &locked);
            orthogonalize(&mut w, &q);
            let b = dot(&w, &w).sqrt();
            if j + 1 == m || b < 1e-12 {
                break;
            }
            beta.push(b);
            q.push(w.iter().map(|x| x / b).collect());
        }

        let (theta, s) = tridiagonal_eigen(&alpha, &beta)?;
        let dim = alpha.len();
        let ritz = |c: usize| -> Vec<f64> {
            let mut y = vec![0.0; n];
            for (r, qr) in q.iter().enumerate().take(dim) {
                let coef = s[[r, c]];
                for (yi, qi) in y.iter_mut().zip(qr) {
                    *yi += coef * qi;
                }
            }
            let nrm = dot(&y, &y).sqrt();
            y.iter_mut().for_each(|v| *v /= nrm);
            y
        };
        let mut progressed = false;
        let mut next_start = None;
        for c in 0..dim {
            if locked.len() == k {
                break;
            }
            let y = ritz(c);
            let ly = apply_laplacian(op, &y);
            let res = ly
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - theta[c] * b).powi(2))
                .sum::<f64>()
                .sqrt();
            if res <= tol * 0.5 {
                locked_vals.push(theta[c]);
                locked.push(y);
                progressed = true;
            } else {
                last_residual = res;
                next_start = Some(y);
                break;
            }
        }
        if used >= budget && locked.len() < k {
            return Err(DeaError::Convergence {
                residual: last_residual,
                iterations: used,
            });
        }
        start = match next_start {
            Some(y) if !progressed || locked.len() < k => y,
            _ => (0..n).map(|_| rng.gen::<f64>() - 0.5).collect(),
        };
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| locked_vals[a].total_cmp(&locked_vals[b]));
    let vals = order.iter().map(|&i| locked_vals[i]).collect();
    let vecs = Array2::from_shape_fn((n, k), |(r, c)| locked[order[c]][r]);
    Ok((vals, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Cyclic Jacobi rotations: slow, simple, and unrelated to the QL path.
    fn jacobi_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
        let n = a.nrows();
        let mut m = a.clone();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m[[i, j]].powi(2))
                .sum();
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if m[[p, q]].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                        m[[k, p]] = c * mkp - s * mkq;
                        m[[k, q]] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                        m[[p, k]] = c * mpk - s * mqk;
                        m[[q, k]] = s * mpk + c * mqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    fn path(n: usize) -> Graph {
        Graph::new(n, (0..n - 1).map(|i| (i, i + 1)), vec![0; n], 2, None).unwrap()
    }

    fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
        let mut rng = seeded(seed);
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|_| rng.gen_bool(p))
            .collect();
        Graph::new(n, edges, vec![0; n], 2, None).unwrap()
    }

    #[test]
    fn path_graph_matches_jacobi_oracle() {
        let g = path(8);
        let oracle = jacobi_eigenvalues(&laplacian_dense(&g).unwrap());
        let (vals, vecs) = spectral_pairs(&g, 3, &SpectralOptions::default()).unwrap();
        for (v, o) in vals.iter().zip(&oracle) {
            assert!((v - o).abs() < 1e-6, "{v} vs {o}");
        }
        for c in 0..3 {
            assert!((vecs.column(c).dot(&vecs.column(c)) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn full_decomposition_matches_jacobi() {
        let g = random_graph(30, 0.2, 4);
        let l = laplacian_dense(&g).unwrap();
        let (vals, vecs) = symmetric_eigen(&l).unwrap();
        let oracle = jacobi_eigenvalues(&l);
        for (v, o) in vals.iter().zip(&oracle) {
            assert!((v - o).abs() < 1e-10);
        }
        let gram = vecs.t().dot(&vecs);
        for i in 0..30 {
            for j in 0..30 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn connected_graph_has_zero_bottom_eigenvalue() {
        let g = path(12);
        let (vals, _) = spectral_pairs(&g, 1, &SpectralOptions::default()).unwrap();
        assert!(vals[0].abs() < 1e-6);
    }

    #[test]
    fn columns_orthonormal() {
        let g = random_graph(60, 0.1, 8);
        let x = spectral_features(&g, 6, 1e-6).unwrap();
        let gram = x.t().dot(&x);
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let g = random_graph(150, 0.08, 21);
        let dense = spectral_pairs(&g, 5, &SpectralOptions::default()).unwrap().0;
        let opts = SpectralOptions {
            tol: 1e-8,
            force_lanczos: true,
            ..Default::default()
        };
        let (vals, vecs) = spectral_pairs(&g, 5, &opts).unwrap();
        for (a, b) in vals.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        let gram = vecs.t().dot(&vecs);
        assert!((gram[[0, 1]]).abs() < 1e-6);
    }

    #[test]
    fn lanczos_budget_exhaustion_reports_residual() {
        let g = random_graph(300, 0.03, 2);
        let opts = SpectralOptions {
            tol: 1e-12,
            max_iter: Some(3),
            force_lanczos: true,
            ..Default::default()
        };
        match spectral_pairs(&g, 4, &opts) {
            Err(DeaError::Convergence { residual, iterations }) => {
                assert!(residual.is_finite() && residual > 0.0);
                assert!(iterations >= 3);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn k_out_of_range() {
        assert!(matches!(spectral_features(&path(4), 4, 1e-6), Err(DeaError::Domain(_))));
        assert!(matches!(spectral_features(&path(4), 0, 1e-6), Err(DeaError::Domain(_))));
    }
}
