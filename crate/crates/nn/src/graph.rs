//! Tape of tensor operations with reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every forward pass. Leaves are created
//! with [`Graph::param`] (gradient tracked) or [`Graph::constant`]; every
//! other node records the operation that produced it. Calling
//! [`Graph::backward`] on a scalar node walks the tape in reverse and
//! leaves a gradient on every node that requires one.

use crate::error::{shape_err, NnError, Result};
use crate::tensor::{matmul_at_into, matmul_bt_into, Scalar, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, T),
    Softmax(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Conv1d {
        input: Var,
        filters: Var,
    },
    MaxPoolRows {
        input: Var,
        argmax: Vec<usize>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    MaskMul(Var, Vec<T>),
    Sum(Var),
    Dot(Var, Vec<T>),
    SoftmaxXent {
        logits: Var,
        labels: Vec<usize>,
        weights: Vec<T>,
        probs: Vec<T>,
        denom: T,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Statistics computed by a train-mode batch norm, for running averages.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchMoments<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracks(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient left by the last [`Graph::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn matrix_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.value(v).expect_matrix(op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.tracks(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(va.shape().to_vec(), data).expect("same shape")
    }

    fn map(&self, a: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| f(x)).collect();
        Tensor::new(va.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.zip_map(a, b, |x, y| x + y);
        let rg = self.tracks(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.zip_map(a, b, |x, y| x - y);
        let rg = self.tracks(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.zip_map(a, b, |x, y| x * y);
        let rg = self.tracks(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Adds a bias row (`[n]` or `[1×n]`) to every row of `x[m×n]`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "add_row")?;
        let b = self.value(bias);
        if b.len() != n || b.rows() != 1 {
            return Err(shape_err("add_row", self.shape(x), b.shape()));
        }
        let bd = b.data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for r in 0..m {
            for (v, &bv) in data[r * n..(r + 1) * n].iter_mut().zip(&bd) {
                *v = *v + bv;
            }
        }
        let rg = self.tracks(&[x, bias]);
        Ok(self.push(Tensor::new(vec![m, n], data)?, Op::AddRow(x, bias), rg))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.map(x, |v| v * factor);
        let rg = self.tracks(&[x]);
        self.push(out, Op::Scale(x, factor), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.map(x, sigmoid);
        let rg = self.tracks(&[x]);
        self.push(out, Op::Sigmoid(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.map(x, |v| v.tanh());
        let rg = self.tracks(&[x]);
        self.push(out, Op::Tanh(x), rg)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        let out = self.map(x, |v| if v > T::zero() { v } else { v * slope });
        let rg = self.tracks(&[x]);
        self.push(out, Op::LeakyRelu(x, slope), rg)
    }

    /// Row-wise softmax of a 2-D tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "softmax")?;
        let mut data = self.value(x).data().to_vec();
        for r in 0..m {
            softmax_in_place(&mut data[r * n..(r + 1) * n]);
        }
        let rg = self.tracks(&[x]);
        Ok(self.push(Tensor::new(vec![m, n], data)?, Op::Softmax(x), rg))
    }

    /// Horizontal concatenation of 2-D tensors with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(NnError::EmptySequence("concat_cols"))?;
        let (m, _) = self.matrix_dims(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.matrix_dims(p, "concat_cols")?;
            if pm != m {
                return Err(shape_err("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let rg = self.tracks(parts);
        Ok(self.push(Tensor::new(vec![m, total], data)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Vertical concatenation of 2-D tensors with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(NnError::EmptySequence("concat_rows"))?;
        let (_, n) = self.matrix_dims(first, "concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (pm, pn) = self.matrix_dims(p, "concat_rows")?;
            if pn != n {
                return Err(shape_err("concat_rows", self.shape(first), self.shape(p)));
            }
            rows += pm;
            data.extend_from_slice(self.value(p).data());
        }
        let rg = self.tracks(parts);
        Ok(self.push(Tensor::new(vec![rows, n], data)?, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Columns `[start, end)` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "slice_cols")?;
        if start >= end || end > n {
            return Err(NnError::Config(format!(
                "slice_cols: range {start}..{end} outside {n} columns"
            )));
        }
        let src = self.value(x);
        let mut data = Vec::with_capacity(m * (end - start));
        for r in 0..m {
            data.extend_from_slice(&src.row_slice(r)[start..end]);
        }
        let rg = self.tracks(&[x]);
        Ok(self.push(Tensor::new(vec![m, end - start], data)?, Op::SliceCols(x, start), rg))
    }

    /// Selects rows of a 2-D tensor by index (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "gather_rows")?;
        if indices.is_empty() {
            return Err(NnError::EmptySequence("gather_rows"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(NnError::Config(format!("gather_rows: index {bad} outside {m} rows")));
        }
        let src = self.value(x);
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(src.row_slice(i));
        }
        let rg = self.tracks(&[x]);
        Ok(self.push(
            Tensor::new(vec![indices.len(), n], data)?,
            Op::GatherRows(x, indices.to_vec()),
            rg,
        ))
    }

    /// Stride-1 convolution over time with zero "same" padding.
    ///
    /// `input` is `L×C`, `filters` is `K×C×F` with odd `K`; output is `L×F`.
    pub fn conv1d(&mut self, input: Var, filters: Var) -> Result<Var> {
        let (l, c) = self.matrix_dims(input, "conv1d")?;
        let (k, fc, f) = match self.shape(filters) {
            [k, fc, f] => (*k, *fc, *f),
            other => return Err(NnError::Config(format!("conv1d: filters must be K×C×F, got {other:?}"))),
        };
        if k % 2 == 0 {
            return Err(NnError::Config(format!("conv1d: kernel size must be odd, got {k}")));
        }
        if fc != c {
            return Err(shape_err("conv1d", self.shape(input), self.shape(filters)));
        }
        let pad = k / 2;
        let x = self.value(input).data();
        let w = self.value(filters).data();
        let mut out = vec![T::zero(); l * f];
        for t in 0..l {
            let out_row = &mut out[t * f..(t + 1) * f];
            for j in 0..k {
                let Some(src) = (t + j).checked_sub(pad).filter(|&s| s < l) else {
                    continue;
                };
                for ch in 0..c {
                    let xv = x[src * c + ch];
                    if xv == T::zero() {
                        continue;
                    }
                    let w_row = &w[(j * c + ch) * f..(j * c + ch + 1) * f];
                    for (o, &wv) in out_row.iter_mut().zip(w_row) {
                        *o = *o + xv * wv;
                    }
                }
            }
        }
        let rg = self.tracks(&[input, filters]);
        Ok(self.push(Tensor::new(vec![l, f], out)?, Op::Conv1d { input, filters }, rg))
    }

    /// Per-column maximum of `L×F`, giving `1×F`. Ties resolve to the
    /// earliest row.
    pub fn max_pool_rows(&mut self, input: Var) -> Result<Var> {
        let (l, f) = self.matrix_dims(input, "max_pool_over_time")?;
        let x = self.value(input);
        let mut argmax = vec![0usize; f];
        let mut best: Vec<T> = x.row_slice(0).to_vec();
        for t in 1..l {
            for (col, &v) in x.row_slice(t).iter().enumerate() {
                if v > best[col] {
                    best[col] = v;
                    argmax[col] = t;
                }
            }
        }
        let rg = self.tracks(&[input]);
        Ok(self.push(Tensor::new(vec![1, f], best)?, Op::MaxPoolRows { input, argmax }, rg))
    }

    /// Batch normalization using the statistics of `x` itself.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<(Var, BatchMoments<T>)> {
        let (b, d) = self.matrix_dims(x, "batch_norm")?;
        if b < 2 {
            return Err(NnError::BatchTooSmall(b));
        }
        self.check_affine(x, gamma, beta, d)?;
        let xv = self.value(x).data();
        let bt = T::from_usize(b).expect("batch size");
        let mut mean = vec![T::zero(); d];
        for r in 0..b {
            for (m, &v) in mean.iter_mut().zip(&xv[r * d..(r + 1) * d]) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / bt);
        let mut var = vec![T::zero(); d];
        for r in 0..b {
            for j in 0..d {
                let diff = xv[r * d + j] - mean[j];
                var[j] = var[j] + diff * diff;
            }
        }
        var.iter_mut().for_each(|v| *v = *v / bt);
        let out = self.bn_apply(x, gamma, beta, &mean, &var, eps, true)?;
        Ok((out, BatchMoments { mean, var }))
    }

    /// Batch normalization with fixed (running) statistics.
    pub fn batch_norm_infer(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], var: &[T], eps: T) -> Result<Var> {
        let (_, d) = self.matrix_dims(x, "batch_norm")?;
        self.check_affine(x, gamma, beta, d)?;
        if mean.len() != d || var.len() != d {
            return Err(shape_err("batch_norm", self.shape(x), &[mean.len()]));
        }
        self.bn_apply(x, gamma, beta, mean, var, eps, false)
    }

    fn check_affine(&self, x: Var, gamma: Var, beta: Var, d: usize) -> Result<()> {
        for p in [gamma, beta] {
            if self.value(p).len() != d {
                return Err(shape_err("batch_norm", self.shape(x), self.shape(p)));
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn bn_apply(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[T],
        var: &[T],
        eps: T,
        batch_stats: bool,
    ) -> Result<Var> {
        let (b, d) = self.matrix_dims(x, "batch_norm")?;
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let be = self.value(beta).data();
        let mut xhat = vec![T::zero(); b * d];
        let mut out = vec![T::zero(); b * d];
        for r in 0..b {
            for j in 0..d {
                let i = r * d + j;
                xhat[i] = (xv[i] - mean[j]) * inv_std[j];
                out[i] = g[j] * xhat[i] + be[j];
            }
        }
        let rg = self.tracks(&[x, gamma, beta]);
        Ok(self.push(
            Tensor::new(vec![b, d], out)?,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            rg,
        ))
    }

    /// Multiplies by a fixed mask (used for dropout).
    pub fn mask_mul(&mut self, x: Var, mask: Vec<T>) -> Result<Var> {
        if mask.len() != self.value(x).len() {
            return Err(shape_err("mask_mul", self.shape(x), &[mask.len()]));
        }
        let data = self.value(x).data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::new(self.shape(x).to_vec(), data)?;
        let rg = self.tracks(&[x]);
        Ok(self.push(out, Op::MaskMul(x, mask), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum();
        let rg = self.tracks(&[x]);
        self.push(Tensor::full(&[1], total), Op::Sum(x), rg)
    }

    /// `Σ x_i · w_i` with constant weights.
    pub fn dot_const(&mut self, x: Var, weights: Vec<T>) -> Result<Var> {
        if weights.len() != self.value(x).len() {
            return Err(shape_err("dot", self.shape(x), &[weights.len()]));
        }
        let total = self.value(x).data().iter().zip(&weights).map(|(&a, &b)| a * b).sum();
        let rg = self.tracks(&[x]);
        Ok(self.push(Tensor::full(&[1], total), Op::Dot(x, weights), rg))
    }

    /// Weighted mean over rows of `-log softmax(logits)[label]`.
    ///
    /// With no weights every row counts once and the loss is the plain batch
    /// mean. The denominator is the sum of the weights.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize], weights: Option<&[T]>) -> Result<Var> {
        let (b, c) = self.matrix_dims(logits, "softmax_cross_entropy")?;
        if labels.len() != b {
            return Err(shape_err("softmax_cross_entropy", self.shape(logits), &[labels.len()]));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= c) {
            return Err(NnError::Label { label, classes: c });
        }
        let weights = match weights {
            Some(w) if w.len() != b => return Err(shape_err("softmax_cross_entropy", &[b], &[w.len()])),
            Some(w) => w.to_vec(),
            None => vec![T::one(); b],
        };
        let denom: T = weights.iter().copied().sum();
        if !(denom > T::zero()) {
            return Err(NnError::Config("softmax_cross_entropy: weights sum to zero".into()));
        }
        let x = self.value(logits).data();
        let mut probs = x.to_vec();
        let mut loss = T::zero();
        for r in 0..b {
            let row = &x[r * c..(r + 1) * c];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let log_z = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
            loss = loss + weights[r] * (log_z - row[labels[r]]);
            softmax_in_place(&mut probs[r * c..(r + 1) * c]);
        }
        let rg = self.tracks(&[logits]);
        Ok(self.push(
            Tensor::full(&[1], loss / denom),
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
                weights,
                probs,
                denom,
            },
            rg,
        ))
    }

    /// Reverse pass from a scalar `root`. Gradients from earlier calls are
    /// discarded.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_shape = self.shape(root);
        if root_shape.iter().product::<usize>() != 1 {
            return Err(NnError::NonScalarRoot(root_shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(vec![T::one()]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            node.grad = if node.requires_grad { g } else { None };
        }
        for node in self.nodes.iter_mut().skip(root.0 + 1) {
            node.grad = None;
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).expect_matrix("matmul").unwrap();
                let n = self.value(*b).cols();
                if self.requires_grad(*a) {
                    let mut da = vec![T::zero(); m * k];
                    matmul_bt_into(g, self.value(*b).data(), &mut da, m, n, k);
                    self.accumulate(grads, *a, da);
                }
                if self.requires_grad(*b) {
                    let mut db = vec![T::zero(); k * n];
                    matmul_at_into(self.value(*a).data(), g, &mut db, m, k, n);
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, g.iter().zip(vb).map(|(&d, &y)| d * y).collect());
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, g.iter().zip(va).map(|(&d, &x)| d * x).collect());
                }
            }
            Op::AddRow(x, bias) => {
                self.accumulate(grads, *x, g.to_vec());
                if self.requires_grad(*bias) {
                    let n = self.value(*bias).len();
                    let mut db = vec![T::zero(); n];
                    for chunk in g.chunks(n) {
                        for (d, &v) in db.iter_mut().zip(chunk) {
                            *d = *d + v;
                        }
                    }
                    self.accumulate(grads, *bias, db);
                }
            }
            Op::Scale(x, f) => {
                self.accumulate(grads, *x, g.iter().map(|&d| d * *f).collect());
            }
            Op::Sigmoid(x) => {
                let d = g.iter().zip(out).map(|(&d, &y)| d * y * (T::one() - y)).collect();
                self.accumulate(grads, *x, d);
            }
            Op::Tanh(x) => {
                let d = g.iter().zip(out).map(|(&d, &y)| d * (T::one() - y * y)).collect();
                self.accumulate(grads, *x, d);
            }
            Op::LeakyRelu(x, slope) => {
                let d = g
                    .iter()
                    .zip(self.value(*x).data())
                    .map(|(&d, &v)| if v > T::zero() { d } else { d * *slope })
                    .collect();
                self.accumulate(grads, *x, d);
            }
            Op::Softmax(x) => {
                let n = node.value.cols();
                let mut d = vec![T::zero(); g.len()];
                for ((dr, gr), yr) in d.chunks_mut(n).zip(g.chunks(n)).zip(out.chunks(n)) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for ((dv, &gv), &yv) in dr.iter_mut().zip(gr).zip(yr) {
                        *dv = yv * (gv - dot);
                    }
                }
                self.accumulate(grads, *x, d);
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let rows = node.value.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.requires_grad(p) {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        self.accumulate(grads, p, d);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if self.requires_grad(p) {
                        self.accumulate(grads, p, g[offset..offset + len].to_vec());
                    }
                    offset += len;
                }
            }
            Op::SliceCols(x, start) => {
                let src = self.value(*x);
                let (m, n) = (src.rows(), src.cols());
                let w = node.value.cols();
                let mut d = vec![T::zero(); m * n];
                for r in 0..m {
                    d[r * n + start..r * n + start + w].copy_from_slice(&g[r * w..(r + 1) * w]);
                }
                self.accumulate(grads, *x, d);
            }
            Op::GatherRows(x, indices) => {
                let src = self.value(*x);
                let n = src.cols();
                let mut d = vec![T::zero(); src.len()];
                for (row, &i) in indices.iter().enumerate() {
                    for (dv, &gv) in d[i * n..(i + 1) * n].iter_mut().zip(&g[row * n..(row + 1) * n]) {
                        *dv = *dv + gv;
                    }
                }
                self.accumulate(grads, *x, d);
            }
            Op::Conv1d { input, filters } => {
                let xin = self.value(*input);
                let (l, c) = (xin.rows(), xin.cols());
                let (k, f) = (self.shape(*filters)[0], self.shape(*filters)[2]);
                let pad = k / 2;
                let x = xin.data();
                let w = self.value(*filters).data();
                let want_x = self.requires_grad(*input);
                let want_w = self.requires_grad(*filters);
                let mut dx = vec![T::zero(); if want_x { l * c } else { 0 }];
                let mut dw = vec![T::zero(); if want_w { k * c * f } else { 0 }];
                for t in 0..l {
                    let g_row = &g[t * f..(t + 1) * f];
                    for j in 0..k {
                        let Some(src) = (t + j).checked_sub(pad).filter(|&s| s < l) else {
                            continue;
                        };
                        for ch in 0..c {
                            let base = (j * c + ch) * f;
                            if want_x {
                                let w_row = &w[base..base + f];
                                let acc: T = g_row.iter().zip(w_row).map(|(&a, &b)| a * b).sum();
                                dx[src * c + ch] = dx[src * c + ch] + acc;
                            }
                            if want_w {
                                let xv = x[src * c + ch];
                                for (dv, &gv) in dw[base..base + f].iter_mut().zip(g_row) {
                                    *dv = *dv + xv * gv;
                                }
                            }
                        }
                    }
                }
                if want_x {
                    self.accumulate(grads, *input, dx);
                }
                if want_w {
                    self.accumulate(grads, *filters, dw);
                }
            }
            Op::MaxPoolRows { input, argmax } => {
                let src = self.value(*input);
                let f = src.cols();
                let mut d = vec![T::zero(); src.len()];
                for (col, &row) in argmax.iter().enumerate() {
                    d[row * f + col] = g[col];
                }
                self.accumulate(grads, *input, d);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let (b, d) = (node.value.rows(), node.value.cols());
                let gm = self.value(*gamma).data();
                if self.requires_grad(*gamma) {
                    let mut dg = vec![T::zero(); d];
                    for r in 0..b {
                        for j in 0..d {
                            dg[j] = dg[j] + g[r * d + j] * xhat[r * d + j];
                        }
                    }
                    self.accumulate(grads, *gamma, dg);
                }
                if self.requires_grad(*beta) {
                    let mut db = vec![T::zero(); d];
                    for r in 0..b {
                        for j in 0..d {
                            db[j] = db[j] + g[r * d + j];
                        }
                    }
                    self.accumulate(grads, *beta, db);
                }
                if self.requires_grad(*x) {
                    let mut dx = vec![T::zero(); b * d];
                    if *batch_stats {
                        let bt = T::from_usize(b).expect("batch size");
                        for j in 0..d {
                            let mut sum_dxhat = T::zero();
                            let mut sum_dxhat_xhat = T::zero();
                            for r in 0..b {
                                let dxhat = g[r * d + j] * gm[j];
                                sum_dxhat = sum_dxhat + dxhat;
                                sum_dxhat_xhat = sum_dxhat_xhat + dxhat * xhat[r * d + j];
                            }
                            for r in 0..b {
                                let i = r * d + j;
                                let dxhat = g[i] * gm[j];
                                dx[i] = inv_std[j] / bt * (bt * dxhat - sum_dxhat - xhat[i] * sum_dxhat_xhat);
                            }
                        }
                    } else {
                        for r in 0..b {
                            for j in 0..d {
                                dx[r * d + j] = g[r * d + j] * gm[j] * inv_std[j];
                            }
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
            }
            Op::MaskMul(x, mask) => {
                self.accumulate(grads, *x, g.iter().zip(mask).map(|(&d, &m)| d * m).collect());
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, vec![g[0]; n]);
            }
            Op::Dot(x, w) => {
                self.accumulate(grads, *x, w.iter().map(|&wv| wv * g[0]).collect());
            }
            Op::SoftmaxXent {
                logits,
                labels,
                weights,
                probs,
                denom,
            } => {
                let c = self.value(*logits).cols();
                let mut d = probs.clone();
                for (r, &label) in labels.iter().enumerate() {
                    d[r * c + label] = d[r * c + label] - T::one();
                    let scale = g[0] * weights[r] / *denom;
                    for v in &mut d[r * c..(r + 1) * c] {
                        *v = *v * scale;
                    }
                }
                self.accumulate(grads, *logits, d);
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], target: Var, contribution: Vec<T>) {
        if !self.requires_grad(target) {
            return;
        }
        match &mut grads[target.0] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contribution) {
                    *e = *e + c;
                }
            }
            slot @ None => *slot = Some(contribution),
        }
    }
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable softmax of one row.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}
