//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every primitive in forward order. [`Tape::backward`]
//! walks the record in reverse, accumulating adjoints into each parent.
//! Values are checked after every forward op and every backward
//! accumulation; a NaN or infinity is an immediate error.

use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};

use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// A fixed sparse row operator: `out[r] = Σ coef · x[col]` over `rows[r]`.
///
/// Used for neighbor aggregation, where row `r` is a receiver and the
/// entries are its senders with normalized edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    num_cols: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    coefs: Vec<f64>,
}

impl SparseRows {
    pub fn new(num_cols: usize, offsets: Vec<usize>, cols: Vec<usize>, coefs: Vec<f64>) -> Result<Self> {
        if offsets.first() != Some(&0) || offsets.last() != Some(&cols.len()) || cols.len() != coefs.len() {
            return Err(Error::shape("sparse_rows", "inconsistent offsets, columns and coefficients"));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) || cols.iter().any(|&c| c >= num_cols) {
            return Err(Error::shape("sparse_rows", "offsets not monotone or column out of range"));
        }
        Ok(Self { num_cols, offsets, cols, coefs })
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[r]..self.offsets[r + 1];
        self.cols[range.clone()].iter().copied().zip(self.coefs[range].iter().copied())
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.num_rows(), x.ncols()));
        for (r, mut row) in out.rows_mut().into_iter().enumerate() {
            for (c, w) in self.row(r) {
                row.scaled_add(w, &x.row(c));
            }
        }
        out
    }

    pub fn apply_transpose(&self, y: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.num_cols, y.ncols()));
        for r in 0..self.num_rows() {
            let src = y.row(r);
            for (c, w) in self.row(r) {
                out.row_mut(c).scaled_add(w, &src);
            }
        }
        out
    }
}

/// Classification targets for [`Tape::cross_entropy`].
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    /// Row-stochastic soft labels.
    Soft(Array2<f64>),
}

impl Targets {
    fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Soft(t) => t.nrows(),
        }
    }

    fn dense(&self, k: usize) -> Array2<f64> {
        match self {
            Targets::Classes(c) => {
                let mut t = Array2::zeros((c.len(), k));
                for (i, &y) in c.iter().enumerate() {
                    t[[i, y]] = 1.0;
                }
                t
            }
            Targets::Soft(t) => t.clone(),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    ScalarMul(Var, f64),
    GradReversal(Var, f64),
    ConcatRows(Var, Var),
    GatherRows(Var, Arc<Vec<usize>>),
    Aggregate(Var, Arc<SparseRows>),
    Sum(Var),
    /// Cached softmax, dense targets and per-row scale `w_i / n`.
    CrossEntropy {
        logits: Var,
        probs: Array2<f64>,
        targets: Array2<f64>,
        scale: Vec<f64>,
    },
    BceWithLogits {
        logits: Var,
        targets: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// `None` when the value does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn check_finite(op: &str, m: &Array2<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op.to_string()))
    }
}

fn same_shape(op: &'static str, a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() == b.dim() {
        Ok(())
    } else {
        Err(Error::shape(op, format!("{:?} vs {:?}", a.dim(), b.dim())))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, name: &str, value: Array2<f64>, op: Op) -> Result<Var> {
        check_finite(name, &value)?;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Record an input or parameter.
    pub fn leaf(&mut self, value: Array2<f64>) -> Result<Var> {
        self.push("leaf", value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.ncols() != y.nrows() {
            return Err(Error::shape("matmul", format!("{:?} x {:?}", x.dim(), y.dim())));
        }
        let out = x.dot(y);
        self.push("matmul", out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let out = self.value(a) + self.value(b);
        self.push("add", out, Op::Add(a, b))
    }

    /// Add a `1 × c` bias row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.nrows() != 1 || b.ncols() != x.ncols() {
            return Err(Error::shape("add_bias", format!("{:?} + {:?}", x.dim(), b.dim())));
        }
        let out = x + b;
        self.push("add_bias", out, Op::AddBias(a, bias))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).mapv(|x| x.max(0.0));
        self.push("relu", out, Op::Relu(a))
    }

    pub fn scalar_mul(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a) * c;
        self.push("scalar_mul", out, Op::ScalarMul(a, c))
    }

    /// Identity forward; the backward pass multiplies the adjoint by `-alpha`.
    pub fn grad_reversal(&mut self, a: Var, alpha: f64) -> Result<Var> {
        if !alpha.is_finite() {
            return Err(Error::NonFinite("grad_reversal alpha".into()));
        }
        let out = self.value(a).clone();
        self.push("grad_reversal", out, Op::GradReversal(a, alpha))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.ncols() != y.ncols() {
            return Err(Error::shape("concat_rows", format!("{:?} over {:?}", x.dim(), y.dim())));
        }
        let out = ndarray::concatenate(Axis(0), &[x.view(), y.view()])
            .map_err(|e| Error::shape("concat_rows", e.to_string()))?;
        self.push("concat_rows", out, Op::ConcatRows(a, b))
    }

    /// `out[i] = a[index[i]]`.
    pub fn gather_rows(&mut self, a: Var, index: Arc<Vec<usize>>) -> Result<Var> {
        let x = self.value(a);
        if index.iter().any(|&i| i >= x.nrows()) {
            return Err(Error::shape("gather_rows", "row index out of range"));
        }
        let out = x.select(Axis(0), &index);
        self.push("gather_rows", out, Op::GatherRows(a, index))
    }

    /// Weighted neighbor aggregation through a fixed sparse operator.
    pub fn aggregate(&mut self, a: Var, op: Arc<SparseRows>) -> Result<Var> {
        let x = self.value(a);
        if x.nrows() != op.num_cols() {
            return Err(Error::shape(
                "aggregate",
                format!("operator has {} columns, input has {} rows", op.num_cols(), x.nrows()),
            ));
        }
        let out = op.apply(x);
        self.push("aggregate", out, Op::Aggregate(a, op))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        self.push("sum", out, Op::Sum(a))
    }

    /// Mean softmax cross-entropy over rows, optionally scaling row `i` by `weights[i]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &Targets, weights: Option<&[f64]>) -> Result<Var> {
        let x = self.value(logits);
        let (n, k) = x.dim();
        if n == 0 {
            return Err(Error::validation("cross_entropy over zero rows"));
        }
        if targets.len() != n {
            return Err(Error::shape("cross_entropy", format!("{} targets for {n} rows", targets.len())));
        }
        if let Targets::Classes(c) = targets {
            if c.iter().any(|&y| y >= k) {
                return Err(Error::shape("cross_entropy", "class index out of range"));
            }
        }
        if let Targets::Soft(t) = targets {
            if t.ncols() != k {
                return Err(Error::shape("cross_entropy", "soft target width differs from logits"));
            }
        }
        if weights.is_some_and(|w| w.len() != n) {
            return Err(Error::shape("cross_entropy", "row weight count differs from rows"));
        }
        let dense = targets.dense(k);
        let mut probs = Array2::zeros((n, k));
        let mut total = 0.0;
        let scale: Vec<f64> = (0..n)
            .map(|i| weights.map_or(1.0, |w| w[i]) / n as f64)
            .collect();
        for i in 0..n {
            let row = x.row(i);
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
            let mut ce = 0.0;
            for c in 0..k {
                probs[[i, c]] = (row[c] - lse).exp();
                if dense[[i, c]] != 0.0 {
                    ce -= dense[[i, c]] * (row[c] - lse);
                }
            }
            total += scale[i] * ce;
        }
        let out = Array2::from_elem((1, 1), total);
        self.push(
            "cross_entropy",
            out,
            Op::CrossEntropy {
                logits,
                probs,
                targets: dense,
                scale,
            },
        )
    }

    /// Mean binary cross-entropy of an `n × 1` logit column against targets in [0, 1].
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let x = self.value(logits);
        if x.ncols() != 1 || x.nrows() != targets.len() {
            return Err(Error::shape("bce_with_logits", format!("{:?} vs {} targets", x.dim(), targets.len())));
        }
        if x.nrows() == 0 {
            return Err(Error::validation("bce_with_logits over zero rows"));
        }
        let n = x.nrows() as f64;
        let total: f64 = x
            .column(0)
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum();
        let out = Array2::from_elem((1, 1), total / n);
        self.push(
            "bce_with_logits",
            out,
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
            },
        )
    }

    /// Adjoints of a scalar `loss` with respect to every recorded value.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::validation("backward on an empty tape"));
        }
        let shape = self.value(loss).dim();
        if shape != (1, 1) {
            return Err(Error::shape("backward", format!("loss must be 1x1, got {shape:?}")));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga, "matmul")?;
                    accumulate(&mut grads, *b, gb, "matmul")?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone(), "add")?;
                    accumulate(&mut grads, *b, g.clone(), "add")?;
                }
                Op::AddBias(a, bias) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *a, g.clone(), "add_bias")?;
                    accumulate(&mut grads, *bias, gb, "add_bias")?;
                }
                Op::Relu(a) => {
                    let mut ga = g.clone();
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|d, &x| if x <= 0.0 { *d = 0.0 });
                    accumulate(&mut grads, *a, ga, "relu")?;
                }
                Op::ScalarMul(a, c) => accumulate(&mut grads, *a, &g * *c, "scalar_mul")?,
                Op::GradReversal(a, alpha) => accumulate(&mut grads, *a, &g * -*alpha, "grad_reversal")?,
                Op::ConcatRows(a, b) => {
                    let split = self.value(*a).nrows();
                    accumulate(&mut grads, *a, g.slice(s![..split, ..]).to_owned(), "concat_rows")?;
                    accumulate(&mut grads, *b, g.slice(s![split.., ..]).to_owned(), "concat_rows")?;
                }
                Op::GatherRows(a, index) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    for (i, &src) in index.iter().enumerate() {
                        ga.row_mut(src).scaled_add(1.0, &g.row(i));
                    }
                    accumulate(&mut grads, *a, ga, "gather_rows")?;
                }
                Op::Aggregate(a, op) => accumulate(&mut grads, *a, op.apply_transpose(&g), "aggregate")?,
                Op::Sum(a) => {
                    let ga = Array2::from_elem(self.value(*a).raw_dim(), g[[0, 0]]);
                    accumulate(&mut grads, *a, ga, "sum")?;
                }
                Op::CrossEntropy {
                    logits,
                    probs,
                    targets,
                    scale,
                } => {
                    let up = g[[0, 0]];
                    let mut ga = Array2::zeros(probs.raw_dim());
                    for (i, mut row) in ga.rows_mut().into_iter().enumerate() {
                        let mass: f64 = targets.row(i).sum();
                        for (c, d) in row.iter_mut().enumerate() {
                            *d = up * scale[i] * (probs[[i, c]] * mass - targets[[i, c]]);
                        }
                    }
                    accumulate(&mut grads, *logits, ga, "cross_entropy")?;
                }
                Op::BceWithLogits { logits, targets } => {
                    let up = g[[0, 0]];
                    let x = self.value(*logits);
                    let n = x.nrows() as f64;
                    let mut ga = Array2::zeros(x.raw_dim());
                    for i in 0..x.nrows() {
                        ga[[i, 0]] = up * (sigmoid(x[[i, 0]]) - targets[i]) / n;
                    }
                    accumulate(&mut grads, *logits, ga, "bce_with_logits")?;
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>, op: &str) -> Result<()> {
    check_finite(&format!("{op} backward"), &g)?;
    match &mut grads[v.0] {
        Some(acc) => *acc += &g,
        slot @ None => *slot = Some(g),
    }
    Ok(())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Adam with bias correction, one moment pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            second: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, i: usize) -> (&Array2<f64>, &Array2<f64>) {
        (&self.first[i], &self.second[i])
    }

    /// One update. Parameters whose gradient is `None` are left untouched,
    /// moments included.
    pub fn step(&mut self, params: &mut [Array2<f64>], grads: &[Option<Array2<f64>>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::shape("adam", "parameter, gradient and state counts differ"));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                same_shape("adam", &params[i], g)?;
                check_finite("adam gradient", g)?;
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            Zip::from(&mut params[i])
                .and(&mut self.first[i])
                .and(&mut self.second[i])
                .and(g)
                .for_each(|p, m, v, &gi| {
                    *m = b1 * *m + (1.0 - b1) * gi;
                    *v = b2 * *v + (1.0 - b2) * gi * gi;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }
}
