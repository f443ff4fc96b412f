use std::sync::Arc;

use dea_core::autodiff::{gradient_check, Tensor, Trace, Var};
use dea_core::graph::{normalize, EdgeOperator};
use dea_core::rng::seeded;
use dea_core::Result;
use ndarray::Array2;
use rand::Rng;

const TOL: f64 = 1e-4;
const H: f64 = 1e-5;

/// Entries bounded away from zero so kinked ops stay differentiable.
fn rand_t(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    Array2::from_shape_fn((rows, cols), |_| {
        let m = rng.gen_range(0.1..1.5);
        if rng.gen_bool(0.5) { m } else { -m }
    })
}

fn check(inputs: &[Tensor], build: impl Fn(&mut Trace, &[Var]) -> Result<Var>) {
    let r = gradient_check(inputs, H, build).unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

/// Contracts any output against fixed weights so every entry matters.
fn weighted_sum(tr: &mut Trace, x: Var, seed: u64) -> Result<Var> {
    let (r, c) = tr.shape(x);
    let w = tr.constant(rand_t(r, c, seed));
    let p = tr.mul(x, w)?;
    Ok(tr.sum(p))
}

#[test]
fn matmul_and_broadcasts() {
    check(&[rand_t(4, 3, 1), rand_t(3, 5, 2), rand_t(1, 5, 3), rand_t(4, 1, 4)], |tr, v| {
        let p = tr.matmul(v[0], v[1])?;
        let p = tr.add(p, v[2])?;
        let p = tr.sub(p, v[3])?;
        let p = tr.mul(p, v[3])?;
        weighted_sum(tr, p, 9)
    });
}

#[test]
fn unary_ops() {
    check(&[rand_t(3, 4, 5)], |tr, v| {
        let a = tr.sigmoid(v[0]);
        let b = tr.elu(v[0], 1.0);
        let c = tr.leaky_relu(v[0], 0.2);
        let d = tr.exp(v[0]);
        let e = tr.abs(v[0]);
        let f = tr.log(e);
        let g = tr.scale(v[0], -1.7);
        let h = tr.add_scalar(g, 0.3);
        let i = tr.clamp(v[0], -0.5, 0.5);
        let all = tr.concat_cols(&[a, b, c, d, f, h, i])?;
        weighted_sum(tr, all, 6)
    });
}

#[test]
fn structural_ops() {
    check(&[rand_t(5, 4, 7), rand_t(2, 4, 8)], |tr, v| {
        let rows = tr.concat_rows(&[v[0], v[1]])?;
        let sl = tr.slice_cols(rows, 1, 3)?;
        let g = tr.gather_rows(sl, Arc::new(vec![0, 6, 6, 2]))?;
        let d = tr.row_dot(g, g)?;
        let m = tr.mean(d);
        let s = weighted_sum(tr, sl, 10)?;
        tr.add(m, s)
    });
}

#[test]
fn sparse_propagation() {
    let edges = vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)];
    let op = Arc::new(normalize(&edges, 5).unwrap());
    check(&[rand_t(5, 3, 11)], |tr, v| {
        let y = tr.spmm(op.clone(), v[0])?;
        weighted_sum(tr, y, 12)
    });
}

#[test]
fn edge_weighted_propagation() {
    let edges = vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)];
    let op = Arc::new(EdgeOperator::new(5, &edges, None));
    check(&[rand_t(6, 1, 13), rand_t(5, 3, 14)], |tr, v| {
        let y = tr.edge_propagate(op.clone(), v[0], v[1])?;
        weighted_sum(tr, y, 15)
    });
}

#[test]
fn weighted_group_softmax() {
    let groups = Arc::new(vec![0, 1, 0, 2, 1, 0, 2]);
    let w0 = rand_t(7, 1, 17).mapv(f64::abs);
    check(&[rand_t(7, 1, 16), w0], |tr, v| {
        let y = tr.group_softmax(v[0], Some(v[1]), groups.clone(), 3)?;
        weighted_sum(tr, y, 18)
    });
}

#[test]
fn scatter_aggregation() {
    let src = Arc::new(vec![0, 1, 2, 2, 3]);
    let dst = Arc::new(vec![1, 0, 0, 3, 2]);
    check(&[rand_t(5, 1, 19), rand_t(4, 3, 20)], |tr, v| {
        let y = tr.scatter_rows(v[0], v[1], src.clone(), dst.clone(), 4)?;
        weighted_sum(tr, y, 21)
    });
}

#[test]
fn two_layer_gcn_loss() {
    let edges = vec![(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7), (7, 8), (8, 9), (3, 9)];
    let op = Arc::new(normalize(&edges, 10).unwrap());
    let pairs_i = Arc::new(vec![0, 2, 4, 7]);
    let pairs_j = Arc::new(vec![1, 5, 6, 3]);
    let labels = Array2::from_shape_vec((4, 1), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    let x = rand_t(10, 4, 22);
    check(&[rand_t(4, 6, 23) * 0.5, rand_t(6, 3, 24) * 0.5], |tr, v| {
        let x = tr.constant(x.clone());
        let h = tr.matmul(x, v[0])?;
        let h = tr.spmm(op.clone(), h)?;
        let h = tr.elu(h, 1.0);
        let h = tr.matmul(h, v[1])?;
        let h = tr.spmm(op.clone(), h)?;
        let hi = tr.gather_rows(h, pairs_i.clone())?;
        let hj = tr.gather_rows(h, pairs_j.clone())?;
        let s = tr.row_dot(hi, hj)?;
        let p = tr.sigmoid(s);
        let p = tr.clamp(p, 1e-12, 1.0 - 1e-12);
        // y log p + (1-y) log(1-p)
        let y = tr.constant(labels.clone());
        let lp = tr.log(p);
        let a = tr.mul(lp, y)?;
        let q = tr.scale(p, -1.0);
        let q = tr.add_scalar(q, 1.0);
        let lq = tr.log(q);
        let ny = tr.constant(labels.mapv(|l| 1.0 - l));
        let b = tr.mul(lq, ny)?;
        let s = tr.add(a, b)?;
        let m = tr.mean(s);
        Ok(tr.scale(m, -1.0))
    });
}
