//! Eager tape: every op computes its value immediately and appends a record;
//! [`Trace::backward`] walks the records once in reverse.

use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};

use super::Tensor;
use crate::error::{DeaError, Result};
use crate::graph::{EdgeOperator, NormalizedOperator};

/// Handle to a record on a [`Trace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<NormalizedOperator>, Var),
    EdgePropagate {
        op: Arc<EdgeOperator>,
        weights: Var,
        x: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    Sigmoid(Var),
    Elu(Var, f64),
    LeakyRelu(Var, f64),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    GatherRows(Var, Arc<Vec<usize>>),
    RowDot(Var, Var),
    GroupSoftmax {
        logits: Var,
        weights: Option<Var>,
        groups: Arc<Vec<usize>>,
        /// Unweighted probabilities `exp(l)/Σ w exp(l)` per entry.
        probs: Vec<f64>,
    },
    ScatterRows {
        coef: Var,
        x: Var,
        src: Arc<Vec<usize>>,
        dst: Arc<Vec<usize>>,
    },
    Dropout(Var, Tensor),
    StraightThrough(Var),
}

#[derive(Clone, Debug)]
struct Record {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Append-only record of a differentiable computation.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    records: Vec<Record>,
}

/// Gradients produced by [`Trace::backward`], indexed by record.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` was unreachable.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(like.raw_dim()))
    }
}

fn broadcastable(a: (usize, usize), b: (usize, usize)) -> bool {
    a == b || b == (1, 1) || (b.0 == 1 && b.1 == a.1) || (b.1 == 1 && b.0 == a.0)
}

/// Sums `g` (shaped like the lhs) down to `target` shape.
fn reduce_to(g: Tensor, target: (usize, usize)) -> Tensor {
    if g.dim() == target {
        return g;
    }
    let mut out = g;
    if target.0 == 1 && out.nrows() != 1 {
        out = out.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if target.1 == 1 && out.ncols() != 1 {
        out = out.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.records[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.records[v.0].value.dim()
    }

    /// Value of a `1×1` record.
    pub fn scalar(&self, v: Var) -> f64 {
        self.records[v.0].value[[0, 0]]
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.records[v.0].needs_grad);
        self.records.push(Record {
            op,
            value,
            needs_grad,
        });
        Var(self.records.len() - 1)
    }

    /// Differentiable leaf (a parameter).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.records.push(Record {
            op: Op::Leaf,
            value,
            needs_grad: true,
        });
        Var(self.records.len() - 1)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.records.push(Record {
            op: Op::Leaf,
            value,
            needs_grad: false,
        });
        Var(self.records.len() - 1)
    }

    /// Column vector constant.
    pub fn constant_column(&mut self, values: &[f64]) -> Var {
        self.constant(Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column"))
    }

    fn shape_err(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> DeaError {
        DeaError::Shape { op, lhs, rhs }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Self::shape_err("matmul", sa, sb));
        }
        let value = self.value(a).dot(self.value(b));
        Ok(self.push(Op::MatMul(a, b), value, &[a, b]))
    }

    /// Sparse operator times dense matrix.
    pub fn spmm(&mut self, op: Arc<NormalizedOperator>, x: Var) -> Result<Var> {
        let sx = self.shape(x);
        if op.dim() != sx.0 {
            return Err(Self::shape_err("spmm", (op.dim(), op.dim()), sx));
        }
        let value = op.matmul(self.value(x).view());
        Ok(self.push(Op::SpMM(op, x), value, &[x]))
    }

    /// Edge-weighted propagation; `weights` is an `|E|×1` column.
    pub fn edge_propagate(&mut self, op: Arc<EdgeOperator>, weights: Var, x: Var) -> Result<Var> {
        let (sw, sx) = (self.shape(weights), self.shape(x));
        if sw != (op.edges().len(), 1) {
            return Err(Self::shape_err("edge_propagate", (op.edges().len(), 1), sw));
        }
        if sx.0 != op.num_nodes() {
            return Err(Self::shape_err("edge_propagate", (op.num_nodes(), sx.1), sx));
        }
        let w: Vec<f64> = self.value(weights).iter().copied().collect();
        let value = op.apply(&w, self.value(x).view());
        Ok(self.push(Op::EdgePropagate { op, weights, x }, value, &[weights, x]))
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var) -> Result<(Tensor, Tensor)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !broadcastable(sa, sb) {
            return Err(Self::shape_err(name, sa, sb));
        }
        Ok((self.value(a).clone(), self.value(b).clone()))
    }

    /// `a + b`; `b` may broadcast as a row, column or scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = self.binary("add", a, b)?;
        Ok(self.push(Op::Add(a, b), va + &vb, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = self.binary("sub", a, b)?;
        Ok(self.push(Op::Sub(a, b), va - &vb, &[a, b]))
    }

    /// Elementwise product with the same broadcasting rules as [`Trace::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = self.binary("mul", a, b)?;
        Ok(self.push(Op::Mul(a, b), va * &vb, &[a, b]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| DeaError::Contract("concat_cols of nothing".into()))?;
        let rows = self.shape(*first).0;
        for p in parts {
            if self.shape(*p).0 != rows {
                return Err(Self::shape_err("concat_cols", self.shape(*first), self.shape(*p)));
            }
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("checked shapes");
        Ok(self.push(Op::ConcatCols(parts.to_vec()), value, parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| DeaError::Contract("concat_rows of nothing".into()))?;
        let cols = self.shape(*first).1;
        for p in parts {
            if self.shape(*p).1 != cols {
                return Err(Self::shape_err("concat_rows", self.shape(*first), self.shape(*p)));
            }
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("checked shapes");
        Ok(self.push(Op::ConcatRows(parts.to_vec()), value, parts))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let sa = self.shape(a);
        if start > end || end > sa.1 {
            return Err(Self::shape_err("slice_cols", sa, (start, end)));
        }
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        Ok(self.push(Op::SliceCols(a, start, end), value, &[a]))
    }

    fn unary(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).mapv(f);
        self.push(op, value, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Op::Sigmoid(a), a, sigmoid)
    }

    pub fn elu(&mut self, a: Var, alpha: f64) -> Var {
        self.unary(Op::Elu(a, alpha), a, |x| if x > 0.0 { x } else { alpha * x.exp_m1() })
    }

    pub fn leaky_relu(&mut self, a: Var, alpha: f64) -> Var {
        self.unary(Op::LeakyRelu(a, alpha), a, |x| if x > 0.0 { x } else { alpha * x })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Op::Exp(a), a, f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(Op::Log(a), a, f64::ln)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(Op::Abs(a), a, f64::abs)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(Op::Scale(a, c), a, |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(Op::AddScalar(a), a, |x| x + c)
    }

    /// Clamp into `[lo, hi]`; zero gradient where clamped.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(Op::Clamp(a, lo, hi), a, |x| x.clamp(lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(Op::Sum(a), value, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Array2::from_elem((1, 1), t.sum() / t.len().max(1) as f64);
        self.push(Op::Mean(a), value, &[a])
    }

    /// Row `k` of the output is row `index[k]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Arc<Vec<usize>>) -> Result<Var> {
        let sa = self.shape(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= sa.0) {
            return Err(Self::shape_err("gather_rows", sa, (bad, 0)));
        }
        let value = self.value(a).select(Axis(0), &index);
        Ok(self.push(Op::GatherRows(a, index), value, &[a]))
    }

    /// Row-wise inner products as an `n×1` column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Self::shape_err("row_dot", sa, sb));
        }
        let value = (self.value(a) * self.value(b))
            .sum_axis(Axis(1))
            .insert_axis(Axis(1));
        Ok(self.push(Op::RowDot(a, b), value, &[a, b]))
    }

    /// Softmax of a column of logits within index groups. With `weights`,
    /// entry `e` becomes `w_e exp(l_e) / Σ_{k∈group} w_k exp(l_k)`.
    pub fn group_softmax(
        &mut self,
        logits: Var,
        weights: Option<Var>,
        groups: Arc<Vec<usize>>,
        num_groups: usize,
    ) -> Result<Var> {
        let sl = self.shape(logits);
        if sl.1 != 1 || sl.0 != groups.len() {
            return Err(Self::shape_err("group_softmax", sl, (groups.len(), 1)));
        }
        if let Some(w) = weights {
            if self.shape(w) != sl {
                return Err(Self::shape_err("group_softmax", sl, self.shape(w)));
            }
        }
        if let Some(&bad) = groups.iter().find(|&&g| g >= num_groups) {
            return Err(Self::shape_err("group_softmax", (num_groups, 1), (bad, 1)));
        }
        let l = self.value(logits).column(0).to_vec();
        let w: Vec<f64> = match weights {
            Some(w) => self.value(w).column(0).to_vec(),
            None => vec![1.0; l.len()],
        };
        let mut max = vec![f64::NEG_INFINITY; num_groups];
        for (&g, &x) in groups.iter().zip(&l) {
            max[g] = max[g].max(x);
        }
        let u: Vec<f64> = groups.iter().zip(&l).map(|(&g, &x)| (x - max[g]).exp()).collect();
        let mut denom = vec![0.0; num_groups];
        for ((&g, &ui), &wi) in groups.iter().zip(&u).zip(&w) {
            denom[g] += wi * ui;
        }
        let probs: Vec<f64> = groups
            .iter()
            .zip(&u)
            .map(|(&g, &ui)| if denom[g] > 0.0 { ui / denom[g] } else { 0.0 })
            .collect();
        let out: Vec<f64> = probs.iter().zip(&w).map(|(p, w)| p * w).collect();
        let value = Array2::from_shape_vec((out.len(), 1), out).expect("column");
        let mut inputs = vec![logits];
        inputs.extend(weights);
        Ok(self.push(
            Op::GroupSoftmax {
                logits,
                weights,
                groups,
                probs,
            },
            value,
            &inputs,
        ))
    }

    /// `out[dst_k] += coef_k · x[src_k]` into an `n_out × cols(x)` matrix.
    pub fn scatter_rows(
        &mut self,
        coef: Var,
        x: Var,
        src: Arc<Vec<usize>>,
        dst: Arc<Vec<usize>>,
        n_out: usize,
    ) -> Result<Var> {
        let (sc, sx) = (self.shape(coef), self.shape(x));
        if sc != (src.len(), 1) || src.len() != dst.len() {
            return Err(Self::shape_err("scatter_rows", sc, (src.len(), 1)));
        }
        if src.iter().any(|&i| i >= sx.0) || dst.iter().any(|&i| i >= n_out) {
            return Err(Self::shape_err("scatter_rows", sx, (n_out, sx.1)));
        }
        let c = self.value(coef);
        let xv = self.value(x);
        let mut value = Array2::zeros((n_out, sx.1));
        for k in 0..src.len() {
            value.row_mut(dst[k]).scaled_add(c[[k, 0]], &xv.row(src[k]));
        }
        Ok(self.push(Op::ScatterRows { coef, x, src, dst }, value, &[coef, x]))
    }

    /// Inverted dropout with keep-probability `1-p`; `p = 0` returns `a` itself.
    pub fn dropout(&mut self, a: Var, p: f64, rng: &mut impl rand::Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(DeaError::Domain(format!("dropout probability {p} outside [0,1)")));
        }
        if p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 - p;
        let mask = self
            .value(a)
            .mapv(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
        let value = self.value(a) * &mask;
        Ok(self.push(Op::Dropout(a, mask), value, &[a]))
    }

    /// Forward `1[a >= 0.5]`, backward identity.
    pub fn straight_through(&mut self, a: Var) -> Var {
        self.unary(Op::StraightThrough(a), a, |x| if x >= 0.5 { 1.0 } else { 0.0 })
    }

    /// Reverse pass from a scalar record.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let sl = self.shape(loss);
        if sl != (1, 1) {
            return Err(DeaError::Contract(format!(
                "backward needs a 1x1 loss, got {}x{}",
                sl.0, sl.1
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            let rec = &self.records[idx];
            if !rec.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(rec, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.records[v.0].needs_grad
    }

    fn propagate(&self, rec: &Record, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, t: Tensor| {
            if !self.wants(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &t,
                slot @ None => *slot = Some(t),
            }
        };
        let y = &rec.value;
        match &rec.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    acc(*a, g.dot(&self.value(*b).t()));
                }
                if self.wants(*b) {
                    acc(*b, self.value(*a).t().dot(g));
                }
            }
            Op::SpMM(op, x) => acc(*x, op.matmul_transpose(g.view())),
            Op::EdgePropagate { op, weights, x } => {
                if self.wants(*x) {
                    let w: Vec<f64> = self.value(*weights).iter().copied().collect();
                    // the edge operator is symmetric in its node signal
                    acc(*x, op.apply(&w, g.view()));
                }
                if self.wants(*weights) {
                    let gw = op.weight_grad(g.view(), self.value(*x).view());
                    acc(*weights, Array2::from_shape_vec((gw.len(), 1), gw).expect("column"));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, reduce_to(g.clone(), self.shape(*b)));
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, reduce_to(-g, self.shape(*b)));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    acc(*a, g * vb);
                }
                if self.wants(*b) {
                    acc(*b, reduce_to(g * va, self.shape(*b)));
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = self.shape(*p).1;
                    acc(*p, g.slice(s![.., offset..offset + w]).to_owned());
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let h = self.shape(*p).0;
                    acc(*p, g.slice(s![offset..offset + h, ..]).to_owned());
                    offset += h;
                }
            }
            Op::SliceCols(a, start, end) => {
                let mut full = Array2::zeros(self.value(*a).raw_dim());
                full.slice_mut(s![.., *start..*end]).assign(g);
                acc(*a, full);
            }
            Op::Sigmoid(a) => acc(*a, Zip::from(g).and(y).map_collect(|g, y| g * y * (1.0 - y))),
            Op::Elu(a, alpha) => {
                let x = self.value(*a);
                acc(
                    *a,
                    Zip::from(g)
                        .and(x)
                        .and(y)
                        .map_collect(|g, x, y| if *x > 0.0 { *g } else { g * (y + alpha) }),
                )
            }
            Op::LeakyRelu(a, alpha) => {
                let x = self.value(*a);
                acc(
                    *a,
                    Zip::from(g)
                        .and(x)
                        .map_collect(|g, x| if *x > 0.0 { *g } else { g * alpha }),
                )
            }
            Op::Exp(a) => acc(*a, g * y),
            Op::Log(a) => acc(*a, g / self.value(*a)),
            Op::Abs(a) => acc(*a, Zip::from(g).and(self.value(*a)).map_collect(|g, x| g * x.signum())),
            Op::Scale(a, c) => acc(*a, g * *c),
            Op::AddScalar(a) | Op::StraightThrough(a) => acc(*a, g.clone()),
            Op::Clamp(a, lo, hi) => acc(
                *a,
                Zip::from(g)
                    .and(self.value(*a))
                    .map_collect(|g, x| if *x < *lo || *x > *hi { 0.0 } else { *g }),
            ),
            Op::Sum(a) => acc(*a, Array2::from_elem(self.value(*a).raw_dim(), g[[0, 0]])),
            Op::Mean(a) => {
                let n = self.value(*a).len().max(1) as f64;
                acc(*a, Array2::from_elem(self.value(*a).raw_dim(), g[[0, 0]] / n))
            }
            Op::GatherRows(a, index) => {
                if self.wants(*a) {
                    let mut out = Array2::zeros(self.value(*a).raw_dim());
                    for (k, &i) in index.iter().enumerate() {
                        let mut row = out.row_mut(i);
                        row += &g.row(k);
                    }
                    acc(*a, out);
                }
            }
            Op::RowDot(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    acc(*a, vb * g);
                }
                if self.wants(*b) {
                    acc(*b, va * g);
                }
            }
            Op::GroupSoftmax {
                logits,
                weights,
                groups,
                probs,
            } => {
                let num_groups = groups.iter().copied().max().map_or(0, |m| m + 1);
                let mut mean_g = vec![0.0; num_groups];
                for (k, &grp) in groups.iter().enumerate() {
                    mean_g[grp] += g[[k, 0]] * y[[k, 0]];
                }
                let centered: Vec<f64> = groups
                    .iter()
                    .enumerate()
                    .map(|(k, &grp)| g[[k, 0]] - mean_g[grp])
                    .collect();
                if self.wants(*logits) {
                    let gl: Vec<f64> = centered.iter().enumerate().map(|(k, c)| y[[k, 0]] * c).collect();
                    acc(*logits, Array2::from_shape_vec((gl.len(), 1), gl).expect("column"));
                }
                if let Some(w) = weights {
                    if self.wants(*w) {
                        let gw: Vec<f64> = centered.iter().zip(probs).map(|(c, p)| p * c).collect();
                        acc(*w, Array2::from_shape_vec((gw.len(), 1), gw).expect("column"));
                    }
                }
            }
            Op::ScatterRows { coef, x, src, dst } => {
                let (vc, vx) = (self.value(*coef), self.value(*x));
                if self.wants(*coef) {
                    let gc: Vec<f64> = (0..src.len())
                        .map(|k| g.row(dst[k]).dot(&vx.row(src[k])))
                        .collect();
                    acc(*coef, Array2::from_shape_vec((gc.len(), 1), gc).expect("column"));
                }
                if self.wants(*x) {
                    let mut gx = Array2::zeros(vx.raw_dim());
                    for k in 0..src.len() {
                        gx.row_mut(src[k]).scaled_add(vc[[k, 0]], &g.row(dst[k]));
                    }
                    acc(*x, gx);
                }
            }
            Op::Dropout(a, mask) => acc(*a, g * mask),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Array2::from_shape_vec((rows, cols), v.to_vec()).unwrap()
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut tr = Trace::new();
        let x = tr.constant(t(1, 1, &[0.0]));
        let y = tr.sigmoid(x);
        assert_eq!(tr.scalar(y), 0.5);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = Array2::from_shape_fn((2, 3), |(i, j)| (i as f64 + 1.0) * 0.7 - j as f64 * 1.3);
        let b = Array2::from_shape_fn((3, 4), |(i, j)| ((i * 4 + j) as f64).sin());
        let mut tr = Trace::new();
        let (va, vb) = (tr.constant(a.clone()), tr.constant(b.clone()));
        let c = tr.matmul(va, vb).unwrap();
        assert_eq!(tr.shape(c), (2, 4));
        for i in 0..2 {
            for j in 0..4 {
                let mut want = 0.0;
                for k in 0..3 {
                    want += a[[i, k]] * b[[k, j]];
                }
                assert!((tr.value(c)[[i, j]] - want).abs() < 1e-12);
            }
        }
        let bad = tr.constant(Array2::zeros((2, 2)));
        match tr.matmul(va, bad) {
            Err(DeaError::Shape { lhs, rhs, .. }) => assert_eq!((lhs, rhs), ((2, 3), (2, 2))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn concat_shape() {
        let mut tr = Trace::new();
        let a = tr.constant(Array2::zeros((5, 2)));
        let b = tr.constant(Array2::ones((5, 3)));
        let c = tr.concat_cols(&[a, b]).unwrap();
        assert_eq!(tr.shape(c), (5, 5));
        let d = tr.constant(Array2::ones((4, 3)));
        assert!(tr.concat_cols(&[a, d]).is_err());
    }

    #[test]
    fn sum_gives_all_ones() {
        let mut tr = Trace::new();
        let x = tr.param(Array2::from_shape_fn((3, 4), |(i, j)| (i + j) as f64));
        let l = tr.sum(x);
        let g = tr.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap(), &Array2::<f64>::ones((3, 4)));
    }

    #[test]
    fn sigmoid_scaled_gradient() {
        let w0 = 0.37;
        let c = -2.5;
        let mut tr = Trace::new();
        let w = tr.param(t(1, 1, &[w0]));
        let s = tr.sigmoid(w);
        let l = tr.scale(s, c);
        let g = tr.backward(l).unwrap();
        let sig = 1.0 / (1.0 + (-w0 as f64).exp());
        assert!((g.get(w).unwrap()[[0, 0]] - c * sig * (1.0 - sig)).abs() < 1e-9);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tr = Trace::new();
        let x = tr.param(Array2::zeros((2, 1)));
        assert!(matches!(tr.backward(x), Err(DeaError::Contract(_))));
    }

    #[test]
    fn unreachable_records_have_no_gradient() {
        let mut tr = Trace::new();
        let x = tr.param(t(1, 1, &[1.0]));
        let unused = tr.param(t(1, 1, &[2.0]));
        let l = tr.exp(x);
        let g = tr.backward(l).unwrap();
        assert!(g.get(unused).is_none());
        assert!((g.get(x).unwrap()[[0, 0]] - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn dropout_zero_is_identity_and_seeded_is_reproducible() {
        let mut tr = Trace::new();
        let x = tr.param(Array2::ones((4, 4)));
        assert_eq!(tr.dropout(x, 0.0, &mut seeded(1)).unwrap(), x);
        let a = tr.dropout(x, 0.5, &mut seeded(3)).unwrap();
        let b = tr.dropout(x, 0.5, &mut seeded(3)).unwrap();
        assert_eq!(tr.value(a), tr.value(b));
        assert!(tr.value(a).iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn straight_through_threshold_is_inclusive() {
        let mut tr = Trace::new();
        let m = tr.param(t(3, 1, &[0.49, 0.5, 0.51]));
        let hard = tr.straight_through(m);
        assert_eq!(tr.value(hard).column(0).to_vec(), vec![0.0, 1.0, 1.0]);
        let l = tr.sum(hard);
        let g = tr.backward(l).unwrap();
        assert_eq!(g.get(m).unwrap().column(0).to_vec(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn group_softmax_uniform_for_equal_logits() {
        let mut tr = Trace::new();
        let l = tr.constant(Array2::zeros((5, 1)));
        let y = tr
            .group_softmax(l, None, Arc::new(vec![0, 0, 1, 1, 1]), 2)
            .unwrap();
        let v = tr.value(y).column(0).to_vec();
        assert!((v[0] - 0.5).abs() < 1e-15 && (v[4] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn broadcast_add_row_bias() {
        let mut tr = Trace::new();
        let x = tr.param(Array2::zeros((3, 2)));
        let b = tr.param(t(1, 2, &[1.0, -1.0]));
        let y = tr.add(x, b).unwrap();
        let l = tr.sum(y);
        let g = tr.backward(l).unwrap();
        assert_eq!(g.get(b).unwrap(), &t(1, 2, &[3.0, 3.0]));
        let bad = tr.param(Array2::zeros((2, 3)));
        assert!(tr.add(x, bad).is_err());
    }
}
