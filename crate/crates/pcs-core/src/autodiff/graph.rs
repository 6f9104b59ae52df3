//! Reverse-mode differentiable computation graph over [`Tensor`]s.
//!
//! Built define-by-run: each op evaluates eagerly and records its parents, so
//! creation order is already a topological order. The backward pass walks
//! that order once in reverse, accumulating (summing) gradients into shared
//! subexpressions.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScalarMul(Var, f64),
    AddRowBroadcast(Var, Var),
    ConcatCols(Var, Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Softplus(Var),
    Square(Var),
    Sqrt(Var),
    Exp(Var),
    ReduceSum(Var),
    ReduceMean(Var),
    RowMin(Var),
    GatherRows(Var, Vec<usize>),
    GroupMaxRows(Var),
    TSoftmaxRows(Var, f64),
    PairwiseSqDist(Var, Var),
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
    /// argmin columns (RowMin) or argmax source rows (GroupMaxRows),
    /// recorded during the forward pass so backward routing is exact
    arg_indices: Vec<usize>,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads[var.0].as_ref()
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Inserts a non-differentiable leaf.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, false, Vec::new())
    }

    /// Inserts a differentiable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, true, Vec::new())
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool, arg_indices: Vec<usize>) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            arg_indices,
        });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        let (lr, lc) = self.value(a).shape();
        let (rr, rc) = self.value(b).shape();
        Error::ShapeMismatch {
            op,
            lhs_rows: lr,
            lhs_cols: lc,
            rhs_rows: rr,
            rhs_cols: rc,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::MatMul(a, b), value, rg, Vec::new()))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.requires(a);
        self.push(Op::Transpose(a), value, rg, Vec::new())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip(self.value(b), "add", |x, y| x + y)?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Add(a, b), value, rg, Vec::new()))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip(self.value(b), "sub", |x, y| x - y)?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Sub(a, b), value, rg, Vec::new()))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip(self.value(b), "mul", |x, y| x * y)?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Mul(a, b), value, rg, Vec::new()))
    }

    pub fn scalar_mul(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        let rg = self.requires(a);
        self.push(Op::ScalarMul(a, s), value, rg, Vec::new())
    }

    /// `x + b` with `b` a 1-row tensor broadcast over the rows of `x`.
    pub fn add_row_broadcast(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(self.shape_err("add_row_broadcast", x, b));
        }
        let mut value = xv.clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            for (o, &bb) in row.iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        let rg = self.requires(x) || self.requires(b);
        Ok(self.push(Op::AddRowBroadcast(x, b), value, rg, Vec::new()))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(self.shape_err("concat_cols", a, b));
        }
        let (rows, ca, cb) = (av.rows(), av.cols(), bv.cols());
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(av.row(r));
            data.extend_from_slice(bv.row(r));
        }
        let value = Tensor::from_vec(rows, ca + cb, data)?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::ConcatCols(a, b), value, rg, Vec::new()))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.requires(a);
        self.push(Op::Relu(a), value, rg, Vec::new())
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.requires(a);
        self.push(Op::LeakyRelu(a, slope), value, rg, Vec::new())
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        // ln(1 + e^x), computed stably for large |x|
        let value = self.value(a).map(|x| x.max(0.0) + (-x.abs()).exp().ln_1p());
        let rg = self.requires(a);
        self.push(Op::Softplus(a), value, rg, Vec::new())
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        let rg = self.requires(a);
        self.push(Op::Square(a), value, rg, Vec::new())
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        let rg = self.requires(a);
        self.push(Op::Sqrt(a), value, rg, Vec::new())
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let rg = self.requires(a);
        self.push(Op::Exp(a), value, rg, Vec::new())
    }

    pub fn reduce_sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar_value(self.value(a).data().iter().sum());
        let rg = self.requires(a);
        self.push(Op::ReduceSum(a), value, rg, Vec::new())
    }

    pub fn reduce_mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let value = Tensor::scalar_value(self.value(a).data().iter().sum::<f64>() / n);
        let rg = self.requires(a);
        self.push(Op::ReduceMean(a), value, rg, Vec::new())
    }

    /// Per-row minimum of a matrix, as a column vector. The subgradient
    /// routes to the first (lowest-column) argmin of each row.
    ///
    /// With `exclude_diag` the entry `(i, i)` is skipped, which turns a
    /// self-distance matrix into a nearest-other-point reduction; the matrix
    /// must then be square with at least two columns.
    pub fn row_min(&mut self, src: Var, exclude_diag: bool) -> Result<Var> {
        let sv = self.value(src);
        let (rows, cols) = sv.shape();
        if exclude_diag && (rows != cols || cols < 2) {
            return Err(Error::InvalidInput(format!(
                "row_min with diagonal exclusion needs a square matrix with at least 2 columns, got {rows}x{cols}"
            )));
        }
        if cols == 0 {
            return Err(Error::InvalidInput("row_min of an empty matrix".into()));
        }
        let mut mins = Vec::with_capacity(rows);
        let mut args = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = sv.row(r);
            let mut best = f64::INFINITY;
            let mut arg = usize::MAX;
            for (c, &v) in row.iter().enumerate() {
                if exclude_diag && c == r {
                    continue;
                }
                if v < best {
                    best = v;
                    arg = c;
                }
            }
            mins.push(best);
            args.push(arg);
        }
        let value = Tensor::from_vec(rows, 1, mins)?;
        let rg = self.requires(src);
        Ok(self.push(Op::RowMin(src), value, rg, args))
    }

    /// Selects rows by index; differentiable w.r.t. the source values only
    /// (indices are fixed data). Repeated indices accumulate gradient.
    pub fn gather_rows(&mut self, src: Var, indices: Vec<usize>) -> Result<Var> {
        let sv = self.value(src);
        if let Some(&bad) = indices.iter().find(|&&i| i >= sv.rows()) {
            return Err(Error::InvalidInput(format!(
                "gather index {bad} out of range for {} rows",
                sv.rows()
            )));
        }
        let cols = sv.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in &indices {
            data.extend_from_slice(sv.row(i));
        }
        let value = Tensor::from_vec(indices.len(), cols, data)?;
        let rg = self.requires(src);
        Ok(self.push(Op::GatherRows(src, indices), value, rg, Vec::new()))
    }

    /// Max-pools every consecutive `group` rows into one output row.
    /// Ties route to the lowest source row.
    pub fn group_max_rows(&mut self, src: Var, group: usize) -> Result<Var> {
        let sv = self.value(src);
        let (rows, cols) = sv.shape();
        if group == 0 || rows % group != 0 {
            return Err(Error::InvalidInput(format!(
                "group size {group} does not divide {rows} rows"
            )));
        }
        let out_rows = rows / group;
        let mut data = vec![f64::NEG_INFINITY; out_rows * cols];
        let mut args = vec![usize::MAX; out_rows * cols];
        for r in 0..rows {
            let o = r / group;
            for c in 0..cols {
                let v = sv.get(r, c);
                let slot = o * cols + c;
                if v > data[slot] {
                    data[slot] = v;
                    args[slot] = r;
                }
            }
        }
        let value = Tensor::from_vec(out_rows, cols, data)?;
        let rg = self.requires(src);
        Ok(self.push(Op::GroupMaxRows(src), value, rg, args))
    }

    /// Row-wise softmax of `logits / t^2`, computed with max subtraction.
    /// The temperature is a schedule parameter, not a differentiable input.
    pub fn t_softmax_rows(&mut self, logits: Var, t: f64) -> Result<Var> {
        if !(t > 0.0) {
            return Err(Error::InvalidTemperature { t });
        }
        let lv = self.value(logits);
        let (rows, cols) = lv.shape();
        let inv_t2 = 1.0 / (t * t);
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let row = lv.row(r);
            let zmax = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v * inv_t2));
            let mut sum = 0.0;
            let start = data.len();
            for &v in row {
                let e = (v * inv_t2 - zmax).exp();
                sum += e;
                data.push(e);
            }
            for d in &mut data[start..] {
                *d /= sum;
            }
        }
        let value = Tensor::from_vec(rows, cols, data)?;
        let rg = self.requires(logits);
        Ok(self.push(Op::TSoftmaxRows(logits, t), value, rg, Vec::new()))
    }

    /// All-pairs squared Euclidean distances between the rows of `a` and the
    /// rows of `b`: entry `(i, j)` is `|a_i - b_j|^2`.
    pub fn pairwise_sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(self.shape_err("pairwise_sq_dist", a, b));
        }
        let (ra, rb, c) = (av.rows(), bv.rows(), av.cols());
        let mut data = Vec::with_capacity(ra * rb);
        for i in 0..ra {
            let arow = av.row(i);
            for j in 0..rb {
                let brow = bv.row(j);
                let mut d = 0.0;
                for k in 0..c {
                    let diff = arow[k] - brow[k];
                    d += diff * diff;
                }
                data.push(d);
            }
        }
        let value = Tensor::from_vec(ra, rb, data)?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(Op::PairwiseSqDist(a, b), value, rg, Vec::new()))
    }

    /// Reverse-mode pass from a scalar output. Returns one gradient per
    /// node that required one.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        let l = lv.scalar()?;
        if !l.is_finite() {
            return Err(Error::NonFinite {
                context: "loss during backward".into(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar_value(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let grad = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(idx, &grad, &mut grads)?;
            grads[idx] = Some(grad);
        }
        Ok(Gradients { grads })
    }

    fn add_grad(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.requires(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn accumulate(&self, idx: usize, grad: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.requires(*a) {
                    let delta = grad.matmul(&self.value(*b).transpose())?;
                    self.add_grad(grads, *a, delta);
                }
                if self.requires(*b) {
                    let delta = self.value(*a).transpose().matmul(grad)?;
                    self.add_grad(grads, *b, delta);
                }
            }
            Op::Transpose(a) => {
                self.add_grad(grads, *a, grad.transpose());
            }
            Op::Add(a, b) => {
                self.add_grad(grads, *a, grad.clone());
                self.add_grad(grads, *b, grad.clone());
            }
            Op::Sub(a, b) => {
                self.add_grad(grads, *a, grad.clone());
                self.add_grad(grads, *b, grad.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.requires(*a) {
                    let delta = grad.zip(self.value(*b), "mul-grad", |g, y| g * y)?;
                    self.add_grad(grads, *a, delta);
                }
                if self.requires(*b) {
                    let delta = grad.zip(self.value(*a), "mul-grad", |g, x| g * x)?;
                    self.add_grad(grads, *b, delta);
                }
            }
            Op::ScalarMul(a, s) => {
                let s = *s;
                self.add_grad(grads, *a, grad.map(|g| g * s));
            }
            Op::AddRowBroadcast(x, b) => {
                self.add_grad(grads, *x, grad.clone());
                if self.requires(*b) {
                    let mut col_sum = Tensor::zeros(1, grad.cols());
                    for r in 0..grad.rows() {
                        for (acc, &g) in col_sum.data_mut().iter_mut().zip(grad.row(r)) {
                            *acc += g;
                        }
                    }
                    self.add_grad(grads, *b, col_sum);
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                if self.requires(*a) {
                    let mut da = Tensor::zeros(grad.rows(), ca);
                    for r in 0..grad.rows() {
                        da.row_mut(r).copy_from_slice(&grad.row(r)[..ca]);
                    }
                    self.add_grad(grads, *a, da);
                }
                if self.requires(*b) {
                    let mut db = Tensor::zeros(grad.rows(), cb);
                    for r in 0..grad.rows() {
                        db.row_mut(r).copy_from_slice(&grad.row(r)[ca..]);
                    }
                    self.add_grad(grads, *b, db);
                }
            }
            Op::Relu(a) => {
                let delta = grad.zip(self.value(*a), "relu-grad", |g, x| {
                    if x > 0.0 {
                        g
                    } else {
                        0.0
                    }
                })?;
                self.add_grad(grads, *a, delta);
            }
            Op::LeakyRelu(a, slope) => {
                let slope = *slope;
                let delta = grad.zip(self.value(*a), "leaky-relu-grad", |g, x| {
                    if x > 0.0 {
                        g
                    } else {
                        slope * g
                    }
                })?;
                self.add_grad(grads, *a, delta);
            }
            Op::Softplus(a) => {
                // d/dx ln(1+e^x) = sigmoid(x)
                let delta = grad.zip(self.value(*a), "softplus-grad", |g, x| {
                    g / (1.0 + (-x).exp())
                })?;
                self.add_grad(grads, *a, delta);
            }
            Op::Square(a) => {
                let delta = grad.zip(self.value(*a), "square-grad", |g, x| g * 2.0 * x)?;
                self.add_grad(grads, *a, delta);
            }
            Op::Sqrt(a) => {
                let delta = grad.zip(&node.value, "sqrt-grad", |g, out| g / (2.0 * out))?;
                self.add_grad(grads, *a, delta);
            }
            Op::Exp(a) => {
                let delta = grad.zip(&node.value, "exp-grad", |g, out| g * out)?;
                self.add_grad(grads, *a, delta);
            }
            Op::ReduceSum(a) => {
                let g = grad.scalar()?;
                let src = self.value(*a);
                self.add_grad(grads, *a, src.map(|_| g));
            }
            Op::ReduceMean(a) => {
                let src = self.value(*a);
                let g = grad.scalar()? / src.len() as f64;
                self.add_grad(grads, *a, src.map(|_| g));
            }
            Op::RowMin(src) => {
                let sv = self.value(*src);
                let mut delta = Tensor::zeros(sv.rows(), sv.cols());
                for r in 0..grad.rows() {
                    let arg = node.arg_indices[r];
                    delta.set(r, arg, grad.get(r, 0));
                }
                self.add_grad(grads, *src, delta);
            }
            Op::GatherRows(src, indices) => {
                let sv = self.value(*src);
                let mut delta = Tensor::zeros(sv.rows(), sv.cols());
                for (r, &i) in indices.iter().enumerate() {
                    let grow = grad.row(r);
                    let drow = delta.row_mut(i);
                    for (d, &g) in drow.iter_mut().zip(grow) {
                        *d += g;
                    }
                }
                self.add_grad(grads, *src, delta);
            }
            Op::GroupMaxRows(src) => {
                let sv = self.value(*src);
                let cols = sv.cols();
                let mut delta = Tensor::zeros(sv.rows(), cols);
                for o in 0..grad.rows() {
                    for c in 0..cols {
                        let r = node.arg_indices[o * cols + c];
                        delta.set(r, c, delta.get(r, c) + grad.get(o, c));
                    }
                }
                self.add_grad(grads, *src, delta);
            }
            Op::TSoftmaxRows(a, t) => {
                let s = &node.value;
                let inv_t2 = 1.0 / (t * t);
                let mut delta = Tensor::zeros(s.rows(), s.cols());
                for r in 0..s.rows() {
                    let srow = s.row(r);
                    let grow = grad.row(r);
                    let dot: f64 = srow.iter().zip(grow).map(|(&si, &gi)| si * gi).sum();
                    let drow = delta.row_mut(r);
                    for ((d, &si), &gi) in drow.iter_mut().zip(srow).zip(grow) {
                        *d = si * (gi - dot) * inv_t2;
                    }
                }
                self.add_grad(grads, *a, delta);
            }
            Op::PairwiseSqDist(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (ra, rb, c) = (av.rows(), bv.rows(), av.cols());
                let need_a = self.requires(*a);
                let need_b = self.requires(*b);
                let mut da = Tensor::zeros(ra, c);
                let mut db = Tensor::zeros(rb, c);
                for i in 0..ra {
                    let arow = av.row(i);
                    for j in 0..rb {
                        let g = 2.0 * grad.get(i, j);
                        if g == 0.0 {
                            continue;
                        }
                        let brow = bv.row(j);
                        for k in 0..c {
                            let diff = arow[k] - brow[k];
                            if need_a {
                                da.set(i, k, da.get(i, k) + g * diff);
                            }
                            if need_b {
                                db.set(j, k, db.get(j, k) - g * diff);
                            }
                        }
                    }
                }
                if need_a {
                    self.add_grad(grads, *a, da);
                }
                if need_b {
                    self.add_grad(grads, *b, db);
                }
            }
        }
        Ok(())
    }
}
