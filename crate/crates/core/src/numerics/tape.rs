//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles in
//! execution order, so the node list is already topologically sorted.
//! [`Tape::backward`] walks it once in reverse, summing contributions from
//! every path into each node.
//!
//! Binary elementwise operations broadcast: an operand may have one row, one
//! column, or both, and is then repeated along that axis.

use crate::error::{Error, Result};
use crate::numerics::matrix::{gemm, Matrix};

/// Epsilon added to the per-row variance in [`Tape::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Norm below which a row counts as zero in the cosine operations.
pub const ZERO_NORM: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Reduce across columns, producing one value per row (`n x 1`).
    Rows,
    /// Reduce across rows, producing one value per column (`1 x m`).
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    SoftmaxRows(Var),
    CosineRows { a: Var, b: Var, na: Vec<f64>, nb: Vec<f64> },
    PairwiseCosine { a: Var, b: Var, an: Matrix, bn: Matrix, na: Vec<f64>, nb: Vec<f64> },
    Logistic(Var),
    Relu(Var),
    LayerNorm { a: Var, inv_std: Vec<f64> },
    Log(Var),
    Recip(Var),
    Sum(Var),
    Mean(Var),
    SumAxis(Var, Axis),
    MaxAxis { a: Var, argmax: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Operation record for one forward pass. Single-threaded by construction.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar output with respect to every node on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`; zeros when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn get_ref(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Matrix {
        let (r, c) = self.shapes[v.0];
        self.grads[v.0].take().unwrap_or_else(|| Matrix::zeros(r, c))
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

    /// Differentiable input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_any(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, true)
    }

    fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let value = gemm(self.value(a), ta, self.value(b), tb)?;
        let g = self.grad_any(&[a, b]);
        Ok(self.push(value, Op::MatMul { a, b, ta, tb }, g))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let g = self.grad_any(&[a]);
        self.push(value, Op::Transpose(a), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = broadcast_binary(self.value(a), self.value(b), |x, y| x + y)?;
        let g = self.grad_any(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), g))
    }

    /// `a - b`, composed as `a + (-1) * b`.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    /// Broadcasting elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = broadcast_binary(self.value(a), self.value(b), |x, y| x * y)?;
        let g = self.grad_any(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), g))
    }

    /// Product with a constant scalar.
    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let g = self.grad_any(&[a]);
        self.push(value, Op::Scale(a, s), g)
    }

    /// `a + s` for a constant scalar `s`.
    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let c = self.constant(Matrix::scalar(s));
        self.add(a, c).expect("scalar always broadcasts")
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        let g = self.grad_any(&[a]);
        self.push(value, Op::SoftmaxRows(a), g)
    }

    /// Cosine similarity between matching rows of `a` and `b` (`n x 1`).
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(b));
        if am.shape() != bm.shape() {
            return Err(Error::Shape(format!(
                "cosine_rows: {:?} vs {:?}",
                am.shape(),
                bm.shape()
            )));
        }
        let na = row_norms(am);
        let nb = row_norms(bm);
        let value = Matrix::column(
            (0..am.rows())
                .map(|i| cosine_from_norms(am.row(i), bm.row(i), na[i], nb[i]))
                .collect(),
        );
        let g = self.grad_any(&[a, b]);
        Ok(self.push(value, Op::CosineRows { a, b, na, nb }, g))
    }

    /// Cosine similarity between every row of `a` and every row of `b`
    /// (`n_a x n_b`).
    pub fn pairwise_cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(b));
        if am.cols() != bm.cols() {
            return Err(Error::Shape(format!(
                "pairwise_cosine: {} vs {} channels",
                am.cols(),
                bm.cols()
            )));
        }
        let (an, na) = normalize_rows(am);
        let (bn, nb) = normalize_rows(bm);
        let value = an.matmul_nt(&bn)?.map(|x| x.clamp(-1.0, 1.0));
        let g = self.grad_any(&[a, b]);
        Ok(self.push(
            value,
            Op::PairwiseCosine {
                a,
                b,
                an,
                bn,
                na,
                nb,
            },
            g,
        ))
    }

    pub fn logistic(&mut self, a: Var) -> Var {
        let value = self.value(a).map(logistic);
        let g = self.grad_any(&[a]);
        self.push(value, Op::Logistic(a), g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let g = self.grad_any(&[a]);
        self.push(value, Op::Relu(a), g)
    }

    /// Per-row standardization without gain or offset.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let am = self.value(a);
        let (rows, cols) = am.shape();
        let mut out = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = am.row(r);
            let n = cols as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            for (o, x) in out.row_mut(r).iter_mut().zip(row) {
                *o = (x - mean) * is;
            }
        }
        let g = self.grad_any(&[a]);
        self.push(out, Op::LayerNorm { a, inv_std }, g)
    }

    /// Natural logarithm; inputs are floored at the smallest positive
    /// normal so the result stays finite.
    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(f64::MIN_POSITIVE).ln());
        let g = self.grad_any(&[a]);
        self.push(value, Op::Log(a), g)
    }

    /// Elementwise reciprocal. Zero entries produce an error.
    pub fn recip(&mut self, a: Var) -> Result<Var> {
        let am = self.value(a);
        if am.data().contains(&0.0) {
            return Err(Error::InvalidArgument("reciprocal of zero".into()));
        }
        let value = am.map(|x| 1.0 / x);
        let g = self.grad_any(&[a]);
        Ok(self.push(value, Op::Recip(a), g))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let g = self.grad_any(&[a]);
        self.push(value, Op::Sum(a), g)
    }

    /// Mean of all entries; the mean of an empty matrix is 0.
    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = if m.is_empty() {
            0.0
        } else {
            m.sum() / m.len() as f64
        };
        let g = self.grad_any(&[a]);
        self.push(Matrix::scalar(value), Op::Mean(a), g)
    }

    pub fn sum_axis(&mut self, a: Var, axis: Axis) -> Var {
        let m = self.value(a);
        let value = match axis {
            Axis::Rows => Matrix::column((0..m.rows()).map(|r| m.row(r).iter().sum()).collect()),
            Axis::Cols => {
                let mut out = vec![0.0; m.cols()];
                for r in 0..m.rows() {
                    for (o, x) in out.iter_mut().zip(m.row(r)) {
                        *o += x;
                    }
                }
                Matrix::row_vector(out)
            }
        };
        let g = self.grad_any(&[a]);
        self.push(value, Op::SumAxis(a, axis), g)
    }

    /// Maximum along an axis; the gradient flows to the first maximizer.
    pub fn max_axis(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let m = self.value(a);
        if m.is_empty() {
            return Err(Error::Shape("max over an empty matrix".into()));
        }
        let (values, argmax): (Vec<f64>, Vec<usize>) = match axis {
            Axis::Rows => (0..m.rows())
                .map(|r| {
                    let (j, v) = first_max(m.row(r).iter().copied());
                    (v, r * m.cols() + j)
                })
                .unzip(),
            Axis::Cols => (0..m.cols())
                .map(|c| {
                    let (i, v) = first_max((0..m.rows()).map(|r| m.get(r, c)));
                    (v, i * m.cols() + c)
                })
                .unzip(),
        };
        let value = match axis {
            Axis::Rows => Matrix::column(values),
            Axis::Cols => Matrix::row_vector(values),
        };
        let g = self.grad_any(&[a]);
        Ok(self.push(value, Op::MaxAxis { a, argmax }, g))
    }

    /// Reverse pass from a `1 x 1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out_shape = self.shape(output);
        if out_shape != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got {}x{}",
                out_shape.0, out_shape.1
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &dy, &mut grads)?;
            grads[idx] = Some(dy);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
        if !self.nodes[v.0].needs_grad {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, node: &Node, dy: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, ta, tb } => {
                let (am, bm) = (self.value(a), self.value(b));
                if self.needs(a) {
                    // C = op(A) op(B): d op(A) = dC op(B)^T.
                    let da = if ta {
                        gemm(bm, tb, dy, true)?
                    } else {
                        gemm(dy, false, bm, !tb)?
                    };
                    self.accumulate(grads, a, da)?;
                }
                if self.needs(b) {
                    let db = if tb {
                        gemm(dy, true, am, ta)?
                    } else {
                        gemm(am, !ta, dy, false)?
                    };
                    self.accumulate(grads, b, db)?;
                }
            }
            &Op::Transpose(a) => self.accumulate(grads, a, dy.transpose())?,
            &Op::Add(a, b) => {
                if self.needs(a) {
                    let ga = reduce_to_shape(dy, self.shape(a));
                    self.accumulate(grads, a, ga)?;
                }
                if self.needs(b) {
                    let gb = reduce_to_shape(dy, self.shape(b));
                    self.accumulate(grads, b, gb)?;
                }
            }
            &Op::Mul(a, b) => {
                if self.needs(a) {
                    let prod = broadcast_binary(dy, self.value(b), |g, x| g * x)?;
                    self.accumulate(grads, a, reduce_to_shape(&prod, self.shape(a)))?;
                }
                if self.needs(b) {
                    let prod = broadcast_binary(dy, self.value(a), |g, x| g * x)?;
                    self.accumulate(grads, b, reduce_to_shape(&prod, self.shape(b)))?;
                }
            }
            &Op::Scale(a, s) => self.accumulate(grads, a, dy.scale(s))?,
            &Op::SoftmaxRows(a) => {
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), dy.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, g)| p * g).sum();
                    for ((o, p), g) in dx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = p * (g - dot);
                    }
                }
                self.accumulate(grads, a, dx)?;
            }
            Op::CosineRows { a, b, na, nb } => {
                let (am, bm) = (self.value(*a), self.value(*b));
                let mut da = Matrix::zeros(am.rows(), am.cols());
                let mut db = Matrix::zeros(bm.rows(), bm.cols());
                for r in 0..am.rows() {
                    if na[r] <= ZERO_NORM || nb[r] <= ZERO_NORM {
                        continue;
                    }
                    let c = y.get(r, 0);
                    let g = dy.get(r, 0);
                    let inv = 1.0 / (na[r] * nb[r]);
                    let (ar, br) = (am.row(r), bm.row(r));
                    for k in 0..am.cols() {
                        da.set(r, k, g * (br[k] * inv - c * ar[k] / (na[r] * na[r])));
                        db.set(r, k, g * (ar[k] * inv - c * br[k] / (nb[r] * nb[r])));
                    }
                }
                self.accumulate(grads, *a, da)?;
                self.accumulate(grads, *b, db)?;
            }
            Op::PairwiseCosine {
                a,
                b,
                an,
                bn,
                na,
                nb,
            } => {
                if self.needs(*a) {
                    let d_an = dy.matmul(bn)?;
                    self.accumulate(grads, *a, unnormalize_grad(&d_an, an, na))?;
                }
                if self.needs(*b) {
                    let d_bn = dy.matmul_tn(an)?;
                    self.accumulate(grads, *b, unnormalize_grad(&d_bn, bn, nb))?;
                }
            }
            &Op::Logistic(a) => {
                let dx = dy.zip_map(y, |g, s| g * s * (1.0 - s))?;
                self.accumulate(grads, a, dx)?;
            }
            &Op::Relu(a) => {
                let dx = dy.zip_map(self.value(a), |g, x| if x > 0.0 { g } else { 0.0 })?;
                self.accumulate(grads, a, dx)?;
            }
            Op::LayerNorm { a, inv_std } => {
                let n = y.cols() as f64;
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), dy.row(r));
                    let mean_g = gr.iter().sum::<f64>() / n;
                    let mean_gy = gr.iter().zip(yr).map(|(g, v)| g * v).sum::<f64>() / n;
                    for ((o, g), v) in dx.row_mut(r).iter_mut().zip(gr).zip(yr) {
                        *o = inv_std[r] * (g - mean_g - v * mean_gy);
                    }
                }
                self.accumulate(grads, *a, dx)?;
            }
            &Op::Log(a) => {
                let dx = dy.zip_map(self.value(a), |g, x| g / x.max(f64::MIN_POSITIVE))?;
                self.accumulate(grads, a, dx)?;
            }
            &Op::Recip(a) => {
                let dx = dy.zip_map(y, |g, r| -g * r * r)?;
                self.accumulate(grads, a, dx)?;
            }
            &Op::Sum(a) => {
                let (r, c) = self.shape(a);
                self.accumulate(grads, a, Matrix::filled(r, c, dy.get(0, 0)))?;
            }
            &Op::Mean(a) => {
                let (r, c) = self.shape(a);
                let n = (r * c).max(1) as f64;
                self.accumulate(grads, a, Matrix::filled(r, c, dy.get(0, 0) / n))?;
            }
            &Op::SumAxis(a, axis) => {
                let (r, c) = self.shape(a);
                let dx = match axis {
                    Axis::Rows => Matrix::from_fn(r, c, |i, _| dy.get(i, 0)),
                    Axis::Cols => Matrix::from_fn(r, c, |_, j| dy.get(0, j)),
                };
                self.accumulate(grads, a, dx)?;
            }
            Op::MaxAxis { a, argmax, .. } => {
                let (r, c) = self.shape(*a);
                let mut dx = Matrix::zeros(r, c);
                for (k, &flat) in argmax.iter().enumerate() {
                    dx.data_mut()[flat] += dy.data()[k];
                }
                self.accumulate(grads, *a, dx)?;
            }
        }
        Ok(())
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    out
}

/// Per-row cosine similarity; rows with zero norm give 0. Output is `n x 1`.
pub fn cosine_rows(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "cosine_rows: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(Matrix::column(
        (0..a.rows())
            .map(|i| {
                let (ra, rb) = (a.row(i), b.row(i));
                cosine_from_norms(ra, rb, norm(ra), norm(rb))
            })
            .collect(),
    ))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn row_norms(m: &Matrix) -> Vec<f64> {
    (0..m.rows()).map(|r| norm(m.row(r))).collect()
}

fn cosine_from_norms(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    if na <= ZERO_NORM || nb <= ZERO_NORM {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

fn normalize_rows(m: &Matrix) -> (Matrix, Vec<f64>) {
    let norms = row_norms(m);
    let mut out = m.clone();
    for (r, &n) in norms.iter().enumerate() {
        let s = if n <= ZERO_NORM { 0.0 } else { 1.0 / n };
        for x in out.row_mut(r) {
            *x *= s;
        }
    }
    (out, norms)
}

/// Maps a gradient w.r.t. normalized rows back to the raw rows.
fn unnormalize_grad(d_hat: &Matrix, hat: &Matrix, norms: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(hat.rows(), hat.cols());
    for r in 0..hat.rows() {
        if norms[r] <= ZERO_NORM {
            continue;
        }
        let (g, h) = (d_hat.row(r), hat.row(r));
        let dot: f64 = g.iter().zip(h).map(|(x, y)| x * y).sum();
        for ((o, gi), hi) in out.row_mut(r).iter_mut().zip(g).zip(h) {
            *o = (gi - dot * hi) / norms[r];
        }
    }
    out
}

fn first_max(iter: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in iter.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

fn broadcast_dim(a: usize, b: usize) -> Option<usize> {
    match (a, b) {
        _ if a == b => Some(a),
        (1, n) | (n, 1) => Some(n),
        _ => None,
    }
}

pub(crate) fn broadcast_binary(
    a: &Matrix,
    b: &Matrix,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Matrix> {
    let shape_err = || {
        Error::Shape(format!(
            "cannot broadcast {}x{} with {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        ))
    };
    let rows = broadcast_dim(a.rows(), b.rows()).ok_or_else(shape_err)?;
    let cols = broadcast_dim(a.cols(), b.cols()).ok_or_else(shape_err)?;
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let (ar, ac) = (a.rows() > 1, a.cols() > 1);
    let (br, bc) = (b.rows() > 1, b.cols() > 1);
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let x = a.get(if ar { r } else { 0 }, if ac { c } else { 0 });
            let y = b.get(if br { r } else { 0 }, if bc { c } else { 0 });
            out.set(r, c, f(x, y));
        }
    }
    Ok(out)
}

fn reduce_to_shape(g: &Matrix, shape: (usize, usize)) -> Matrix {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for r in 0..g.rows() {
        let tr = if shape.0 == 1 { 0 } else { r };
        for c in 0..g.cols() {
            let tc = if shape.1 == 1 { 0 } else { c };
            let cur = out.get(tr, tc);
            out.set(tr, tc, cur + g.get(r, c));
        }
    }
    out
}
