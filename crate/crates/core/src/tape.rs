//! Reverse-mode differentiation over real vectors.
//!
//! Every node holds a flat real buffer. Complex quantities are stored as
//! interleaved `(re, im)` pairs, and the gradient of a real loss with respect
//! to such a buffer is itself interleaved as `(∂L/∂re, ∂L/∂im)`. Under that
//! convention the adjoint of `Y = A X` is `∂X = A^H ∂Y`.
//!
//! Ops are evaluated eagerly when pushed. Nodes only reference earlier nodes,
//! so the tape is topologically ordered by construction and the backward
//! sweep is a single reverse pass.

use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::scalar::Real;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Constant sparse linear map `y = S x + offset`, stored row-compressed.
#[derive(Clone, Debug)]
pub struct SparseMap<T> {
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    coef: Vec<T>,
    offset: Vec<T>,
}

impl<T: Real> SparseMap<T> {
    pub fn builder(cols: usize) -> SparseMapBuilder<T> {
        SparseMapBuilder {
            map: SparseMap {
                cols,
                row_ptr: vec![0],
                col_idx: Vec::new(),
                coef: Vec::new(),
                offset: Vec::new(),
            },
        }
    }

    /// Picks entries `indices` out of a vector of length `cols`.
    pub fn gather(cols: usize, indices: &[usize]) -> Self {
        let mut b = Self::builder(cols);
        for &i in indices {
            b.row(&[(i, T::one())], T::zero());
        }
        b.build()
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols, "sparse map input length");
        (0..self.rows())
            .map(|r| {
                let mut acc = self.offset[r];
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.coef[k] * x[self.col_idx[k]];
                }
                acc
            })
            .collect()
    }

    fn apply_transpose_into(&self, g: &[T], out: &mut [T]) {
        for (r, &gr) in g.iter().enumerate() {
            if gr == T::zero() {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.col_idx[k]] += self.coef[k] * gr;
            }
        }
    }
}

pub struct SparseMapBuilder<T> {
    map: SparseMap<T>,
}

impl<T: Real> SparseMapBuilder<T> {
    pub fn row(&mut self, entries: &[(usize, T)], offset: T) -> &mut Self {
        for &(c, v) in entries {
            assert!(c < self.map.cols, "sparse map column {c} out of range");
            self.map.col_idx.push(c);
            self.map.coef.push(v);
        }
        self.map.row_ptr.push(self.map.col_idx.len());
        self.map.offset.push(offset);
        self
    }

    pub fn build(self) -> SparseMap<T> {
        self.map
    }
}

#[derive(Clone, Debug)]
enum Op<T: Real> {
    Leaf,
    Const,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    Offset(Var),
    Sigmoid(Var),
    Tanh(Var),
    Ln(Var),
    Sum(Var),
    SumSq(Var),
    Min { x: Var, arg: usize },
    Concat(Vec<Var>),
    Affine { params: Var, w_off: usize, b_off: usize, x: Var, out: usize, inp: usize },
    Linear { map: Arc<SparseMap<T>>, x: Var },
    ConstLeftMul { left: Arc<ComplexMatrix<T>>, x: Var, n: usize },
    ConstRightMul { x: Var, right: Arc<ComplexMatrix<T>>, m: usize },
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Adjoint { x: Var, rows: usize, cols: usize },
    Abs2(Var),
    Phase(Var),
    ProjectPower { x: Var, scale: T },
}

#[derive(Clone, Debug)]
struct Node<T: Real> {
    op: Op<T>,
    value: Vec<T>,
}

/// Recording of a computation, differentiable in reverse.
#[derive(Clone, Debug, Default)]
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

/// Per-node adjoints from one backward sweep.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Adjoint of `v`, or `None` if the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

/// Gradients for a set of parameter slots.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport<T> {
    pub grads: Vec<Vec<T>>,
    /// Slots with no path to the loss; their gradient is reported as zeros.
    pub disconnected: Vec<usize>,
}

#[inline]
fn cx<T: Real>(buf: &[T], i: usize) -> Complex<T> {
    Complex::new(buf[2 * i], buf[2 * i + 1])
}

#[inline]
fn cx_add<T: Real>(buf: &mut [T], i: usize, z: Complex<T>) {
    buf[2 * i] += z.re;
    buf[2 * i + 1] += z.im;
}

/// Dot product with independent partial sums so the loop vectorizes.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        let val = self.value(v);
        assert_eq!(val.len(), 1, "node {} is not a scalar", v.0);
        val[0]
    }

    /// Mutable access to a leaf's value. Nodes recorded after the leaf are
    /// stale until re-recorded.
    pub fn leaf_value_mut(&mut self, v: Var) -> &mut [T] {
        assert!(matches!(self.nodes[v.0].op, Op::Leaf), "node {} is not a leaf", v.0);
        &mut self.nodes[v.0].value
    }

    fn push(&mut self, op: Op<T>, value: Vec<T>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    fn len_of(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    /// Input node that gradients are collected for.
    pub fn leaf(&mut self, value: Vec<T>) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Input node that never receives a gradient.
    pub fn constant(&mut self, value: Vec<T>) -> Var {
        self.push(Op::Const, value)
    }

    fn zip(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.len(), vb.len(), "elementwise length mismatch");
        let value = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
        self.push(op, value)
    }

    fn map(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let value = self.value(a).iter().map(|&x| f(x)).collect();
        self.push(op, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.map(a, Op::Scale(a, s), |x| x * s)
    }

    /// `a + c` for a constant vector `c`.
    pub fn offset(&mut self, a: Var, c: &[T]) -> Var {
        let va = self.value(a);
        assert_eq!(va.len(), c.len(), "offset length mismatch");
        let value = va.iter().zip(c).map(|(&x, &y)| x + y).collect();
        self.push(Op::Offset(a), value)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), T::tanh)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.map(a, Op::Ln(a), T::ln)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().copied().sum();
        self.push(Op::Sum(a), vec![s])
    }

    pub fn sum_sq(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().map(|&x| x * x).sum();
        self.push(Op::SumSq(a), vec![s])
    }

    /// Minimum entry; the adjoint goes to the first minimising index.
    pub fn min(&mut self, a: Var) -> Var {
        let va = self.value(a);
        assert!(!va.is_empty(), "min of empty vector");
        let mut arg = 0;
        for (i, &x) in va.iter().enumerate() {
            if x < va[arg] {
                arg = i;
            }
        }
        let m = va[arg];
        self.push(Op::Min { x: a, arg }, vec![m])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut value = Vec::new();
        for &p in parts {
            value.extend_from_slice(self.value(p));
        }
        self.push(Op::Concat(parts.to_vec()), value)
    }

    /// Dense layer `W x + b`, with `W` (`out x inp`, row-major) and `b` read
    /// from slices of the flat parameter node `params`.
    pub fn affine(&mut self, params: Var, w_off: usize, b_off: usize, x: Var, out: usize, inp: usize) -> Var {
        let p = self.value(params);
        let xv = self.value(x);
        assert_eq!(xv.len(), inp, "affine input length");
        assert!(w_off + out * inp <= p.len() && b_off + out <= p.len(), "affine parameter slice");
        let mut y = p[b_off..b_off + out].to_vec();
        for (o, yo) in y.iter_mut().enumerate() {
            *yo += dot(&p[w_off + o * inp..w_off + (o + 1) * inp], xv);
        }
        self.push(Op::Affine { params, w_off, b_off, x, out, inp }, y)
    }

    pub fn linear(&mut self, map: Arc<SparseMap<T>>, x: Var) -> Var {
        let value = map.apply(self.value(x));
        self.push(Op::Linear { map, x }, value)
    }

    /// `L X` for a constant complex `L` (`m x k`) and interleaved `X` (`k x n`).
    pub fn const_left_mul(&mut self, left: Arc<ComplexMatrix<T>>, x: Var, n: usize) -> Var {
        let (m, k) = (left.rows(), left.cols());
        let xv = self.value(x);
        assert_eq!(xv.len(), 2 * k * n, "const_left_mul operand shape");
        let mut y = vec![T::zero(); 2 * m * n];
        for i in 0..m {
            let lrow = left.row(i);
            for (l, &a) in lrow.iter().enumerate() {
                for j in 0..n {
                    cx_add(&mut y, i * n + j, a * cx(xv, l * n + j));
                }
            }
        }
        self.push(Op::ConstLeftMul { left, x, n }, y)
    }

    /// `X R` for interleaved `X` (`m x k`) and a constant complex `R` (`k x n`).
    pub fn const_right_mul(&mut self, x: Var, right: Arc<ComplexMatrix<T>>, m: usize) -> Var {
        let (k, n) = (right.rows(), right.cols());
        let xv = self.value(x);
        assert_eq!(xv.len(), 2 * m * k, "const_right_mul operand shape");
        let mut y = vec![T::zero(); 2 * m * n];
        for i in 0..m {
            for l in 0..k {
                let a = cx(xv, i * k + l);
                for (j, &b) in right.row(l).iter().enumerate() {
                    cx_add(&mut y, i * n + j, a * b);
                }
            }
        }
        self.push(Op::ConstRightMul { x, right, m }, y)
    }

    /// Complex product of two interleaved nodes, `A` (`m x k`) times `B` (`k x n`).
    pub fn matmul(&mut self, a: Var, b: Var, m: usize, k: usize, n: usize) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.len(), 2 * m * k, "matmul left shape");
        assert_eq!(bv.len(), 2 * k * n, "matmul right shape");
        let mut y = vec![T::zero(); 2 * m * n];
        for i in 0..m {
            for l in 0..k {
                let x = cx(av, i * k + l);
                for j in 0..n {
                    cx_add(&mut y, i * n + j, x * cx(bv, l * n + j));
                }
            }
        }
        self.push(Op::MatMul { a, b, m, k, n }, y)
    }

    /// Conjugate transpose of an interleaved `rows x cols` node.
    pub fn adjoint(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len(), 2 * rows * cols, "adjoint shape");
        let mut y = vec![T::zero(); xv.len()];
        for r in 0..rows {
            for c in 0..cols {
                let z = cx(xv, r * cols + c).conj();
                y[2 * (c * rows + r)] = z.re;
                y[2 * (c * rows + r) + 1] = z.im;
            }
        }
        self.push(Op::Adjoint { x, rows, cols }, y)
    }

    /// `|z|^2` per interleaved complex entry.
    pub fn abs2(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len() % 2, 0, "abs2 needs interleaved input");
        let value = xv.chunks_exact(2).map(|p| p[0] * p[0] + p[1] * p[1]).collect();
        self.push(Op::Abs2(x), value)
    }

    /// `e^{j x}` per real entry, interleaved.
    pub fn phase(&mut self, x: Var) -> Var {
        let mut value = Vec::with_capacity(2 * self.len_of(x));
        for &w in self.value(x) {
            value.push(w.cos());
            value.push(w.sin());
        }
        self.push(Op::Phase(x), value)
    }

    /// Scales `x` back onto the ball `‖x‖² ≤ budget` when it lies outside.
    pub fn project_power(&mut self, x: Var, budget: T) -> Var {
        let xv = self.value(x);
        let power: T = xv.iter().map(|&v| v * v).sum();
        let scale = if power <= budget { T::one() } else { (budget / power).sqrt() };
        let value = xv.iter().map(|&v| v * scale).collect();
        self.push(Op::ProjectPower { x, scale }, value)
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.len_of(loss), 1, "loss must be a scalar node");
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Const => continue,
                Op::Add(a, b) => {
                    self.acc(&mut grads, *a, |d| add_into(d, &g));
                    self.acc(&mut grads, *b, |d| add_into(d, &g));
                }
                Op::Sub(a, b) => {
                    self.acc(&mut grads, *a, |d| add_into(d, &g));
                    self.acc(&mut grads, *b, |d| {
                        for (x, &y) in d.iter_mut().zip(&g) {
                            *x -= y;
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    self.acc(&mut grads, *a, |d| {
                        for ((x, &gg), &y) in d.iter_mut().zip(&g).zip(vb) {
                            *x += gg * y;
                        }
                    });
                    self.acc(&mut grads, *b, |d| {
                        for ((x, &gg), &y) in d.iter_mut().zip(&g).zip(va) {
                            *x += gg * y;
                        }
                    });
                }
                Op::Div(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    self.acc(&mut grads, *a, |d| {
                        for ((x, &gg), &y) in d.iter_mut().zip(&g).zip(vb) {
                            *x += gg / y;
                        }
                    });
                    self.acc(&mut grads, *b, |d| {
                        for (((x, &gg), &num), &den) in d.iter_mut().zip(&g).zip(va).zip(vb) {
                            *x -= gg * num / (den * den);
                        }
                    });
                }
                Op::Scale(a, s) => {
                    self.acc(&mut grads, *a, |d| {
                        for (x, &gg) in d.iter_mut().zip(&g) {
                            *x += gg * *s;
                        }
                    });
                }
                Op::Offset(a) => self.acc(&mut grads, *a, |d| add_into(d, &g)),
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    self.acc(&mut grads, *a, |d| {
                        for ((x, &gg), &s) in d.iter_mut().zip(&g).zip(y) {
                            *x += gg * s * (T::one() - s);
                        }
                    });
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    self.acc(&mut grads, *a, |d| {
                        for ((x, &gg), &t) in d.iter_mut().zip(&g).zip(y) {
                            *x += gg * (T::one() - t * t);
                        }
                    });
                }
                Op::Ln(a) => {
                    let va = self.value(*a);
                    self.acc(&mut grads, *a, |d| {
                        for ((x, &gg), &v) in d.iter_mut().zip(&g).zip(va) {
                            *x += gg / v;
                        }
                    });
                }
                Op::Sum(a) => {
                    self.acc(&mut grads, *a, |d| {
                        for x in d.iter_mut() {
                            *x += g[0];
                        }
                    });
                }
                Op::SumSq(a) => {
                    let va = self.value(*a);
                    self.acc(&mut grads, *a, |d| {
                        for (x, &v) in d.iter_mut().zip(va) {
                            *x += T::two() * v * g[0];
                        }
                    });
                }
                Op::Min { x, arg } => self.acc(&mut grads, *x, |d| d[*arg] += g[0]),
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let len = self.len_of(p);
                        self.acc(&mut grads, p, |d| add_into(d, &g[start..start + len]));
                        start += len;
                    }
                }
                Op::Affine { params, w_off, b_off, x, out, inp } => {
                    let (w_off, b_off, out, inp) = (*w_off, *b_off, *out, *inp);
                    let xv = self.value(*x);
                    let p = self.value(*params);
                    self.acc(&mut grads, *params, |d| {
                        for o in 0..out {
                            let go = g[o];
                            d[b_off + o] += go;
                            if go != T::zero() {
                                let row = &mut d[w_off + o * inp..w_off + (o + 1) * inp];
                                for (w, &xi) in row.iter_mut().zip(xv) {
                                    *w += go * xi;
                                }
                            }
                        }
                    });
                    self.acc(&mut grads, *x, |d| {
                        for o in 0..out {
                            let go = g[o];
                            if go == T::zero() {
                                continue;
                            }
                            let row = &p[w_off + o * inp..w_off + (o + 1) * inp];
                            for (xi, &w) in d.iter_mut().zip(row) {
                                *xi += go * w;
                            }
                        }
                    });
                }
                Op::Linear { map, x } => self.acc(&mut grads, *x, |d| map.apply_transpose_into(&g, d)),
                Op::ConstLeftMul { left, x, n } => {
                    let n = *n;
                    // ∂X = L^H ∂Y
                    self.acc(&mut grads, *x, |d| {
                        for i in 0..left.rows() {
                            for (l, a) in left.row(i).iter().enumerate() {
                                let ac = a.conj();
                                for j in 0..n {
                                    cx_add(d, l * n + j, ac * cx(&g, i * n + j));
                                }
                            }
                        }
                    });
                }
                Op::ConstRightMul { x, right, m } => {
                    let m = *m;
                    let (k, n) = (right.rows(), right.cols());
                    // ∂X = ∂Y R^H
                    self.acc(&mut grads, *x, |d| {
                        for i in 0..m {
                            for l in 0..k {
                                let mut acc = Complex::new(T::zero(), T::zero());
                                for (j, b) in right.row(l).iter().enumerate() {
                                    acc += cx(&g, i * n + j) * b.conj();
                                }
                                cx_add(d, i * k + l, acc);
                            }
                        }
                    });
                }
                Op::MatMul { a, b, m, k, n } => {
                    let (m, k, n) = (*m, *k, *n);
                    let (av, bv) = (self.value(*a), self.value(*b));
                    // ∂A = ∂Y B^H, ∂B = A^H ∂Y
                    self.acc(&mut grads, *a, |d| {
                        for i in 0..m {
                            for l in 0..k {
                                let mut acc = Complex::new(T::zero(), T::zero());
                                for j in 0..n {
                                    acc += cx(&g, i * n + j) * cx(bv, l * n + j).conj();
                                }
                                cx_add(d, i * k + l, acc);
                            }
                        }
                    });
                    self.acc(&mut grads, *b, |d| {
                        for i in 0..m {
                            for l in 0..k {
                                let ac = cx(av, i * k + l).conj();
                                for j in 0..n {
                                    cx_add(d, l * n + j, ac * cx(&g, i * n + j));
                                }
                            }
                        }
                    });
                }
                Op::Adjoint { x, rows, cols } => {
                    let (rows, cols) = (*rows, *cols);
                    self.acc(&mut grads, *x, |d| {
                        for r in 0..rows {
                            for c in 0..cols {
                                cx_add(d, r * cols + c, cx(&g, c * rows + r).conj());
                            }
                        }
                    });
                }
                Op::Abs2(x) => {
                    let xv = self.value(*x);
                    self.acc(&mut grads, *x, |d| {
                        for (i, &gg) in g.iter().enumerate() {
                            d[2 * i] += T::two() * xv[2 * i] * gg;
                            d[2 * i + 1] += T::two() * xv[2 * i + 1] * gg;
                        }
                    });
                }
                Op::Phase(x) => {
                    let y = &node.value;
                    self.acc(&mut grads, *x, |d| {
                        for (i, di) in d.iter_mut().enumerate() {
                            // d cos = -sin, d sin = cos
                            *di += -y[2 * i + 1] * g[2 * i] + y[2 * i] * g[2 * i + 1];
                        }
                    });
                }
                Op::ProjectPower { x, scale } => {
                    let s = *scale;
                    let xv = self.value(*x);
                    if s == T::one() {
                        self.acc(&mut grads, *x, |d| add_into(d, &g));
                    } else {
                        // y = sqrt(P) x / ‖x‖:  ∂x = s (g - x (x·g) / ‖x‖²)
                        let power: T = xv.iter().map(|&v| v * v).sum();
                        let xg: T = xv.iter().zip(&g).map(|(&a, &b)| a * b).sum();
                        let c = xg / power;
                        self.acc(&mut grads, *x, |d| {
                            for ((di, &gg), &xi) in d.iter_mut().zip(&g).zip(xv) {
                                *di += s * (gg - xi * c);
                            }
                        });
                    }
                }
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    #[inline]
    fn acc(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if matches!(self.nodes[v.0].op, Op::Const) {
            return;
        }
        let len = self.len_of(v);
        let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); len]);
        f(slot);
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Exact reverse-mode gradients of `loss` with respect to `params`.
///
/// A slot with no path to the loss gets a zero vector and is listed in
/// [`GradReport::disconnected`]; non-finite entries are an error.
pub fn grad<T: Real>(tape: &Tape<T>, loss: Var, params: &[Var]) -> Result<GradReport<T>> {
    let all = tape.backward(loss);
    let mut grads = Vec::with_capacity(params.len());
    let mut disconnected = Vec::new();
    for (slot, &p) in params.iter().enumerate() {
        match all.wrt(p) {
            Some(g) => {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteGradient { slot });
                }
                grads.push(g.to_vec());
            }
            None => {
                disconnected.push(slot);
                grads.push(vec![T::zero(); tape.len_of(p)]);
            }
        }
    }
    Ok(GradReport { grads, disconnected })
}

/// Central-difference gradient estimate `(f(x+h e_i) - f(x-h e_i)) / 2h`.
pub fn finite_diff_grad<T: Real>(mut loss_fn: impl FnMut(&[T]) -> T, x: &[T], step: T) -> Result<Vec<T>> {
    if !(step > T::zero()) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = loss_fn(&probe);
        probe[i] = x[i] - step;
        let down = loss_fn(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: i,
                value: if up.is_finite() { down } else { up }.to_f64_lossy(),
            });
        }
        out.push((up - down) / (T::two() * step));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0, 2.0, 3.0]);
        let l = t.sum_sq(x);
        let r = grad(&t, l, &[x]).unwrap();
        assert_eq!(r.grads[0], vec![2.0, 4.0, 6.0]);
        assert!(r.disconnected.is_empty());
    }

    #[test]
    fn min_tie_routes_to_first() {
        let mut t = Tape::new();
        let x = t.leaf(vec![0.5, 0.5]);
        let l = t.min(x);
        assert_eq!(grad(&t, l, &[x]).unwrap().grads[0], vec![1.0, 0.0]);
    }

    #[test]
    fn disconnected_slot_is_flagged_with_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0]);
        let y = t.leaf(vec![2.0, 3.0]);
        let l = t.sum_sq(x);
        let r = grad(&t, l, &[x, y]).unwrap();
        assert_eq!(r.disconnected, vec![1]);
        assert_eq!(r.grads[1], vec![0.0, 0.0]);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut t = Tape::new();
        let x = t.leaf(vec![0.0]);
        let y = t.ln(x);
        let l = t.sum(y);
        assert!(matches!(grad(&t, l, &[x]), Err(Error::NonFiniteGradient { slot: 0 })));
    }

    #[test]
    fn abs2_at_zero_is_smooth() {
        let mut t = Tape::new();
        let x = t.leaf(vec![0.0, 0.0]);
        let a = t.abs2(x);
        let l = t.sum(a);
        assert_eq!(grad(&t, l, &[x]).unwrap().grads[0], vec![0.0, 0.0]);
    }

    #[test]
    fn finite_diff_of_square() {
        let g = finite_diff_grad(|x: &[f64]| x[0] * x[0], &[3.0], 1e-4).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-7);
        let z = finite_diff_grad(|_: &[f64]| 4.2, &[1.0, -1.0], 1e-3).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        assert!(finite_diff_grad(|x: &[f64]| x[0], &[1.0], 0.0).is_err());
        assert!(matches!(
            finite_diff_grad(|x: &[f64]| x[0].ln(), &[0.0], 1e-3),
            Err(Error::NonFiniteLoss { .. })
        ));
    }

    // Builds a loss touching every op and compares against finite differences.
    fn kitchen_sink(t: &mut Tape<f64>, x: Var, y: Var) -> Var {
        let left = Arc::new(
            ComplexMatrix::new(
                2,
                2,
                vec![
                    Complex::new(0.3, -0.2),
                    Complex::new(1.1, 0.4),
                    Complex::new(-0.7, 0.5),
                    Complex::new(0.2, 0.9),
                ],
            )
            .unwrap(),
        );
        let right = Arc::new(ComplexMatrix::new(2, 1, vec![Complex::new(0.6, 0.1), Complex::new(-0.4, 0.8)]).unwrap());
        // x: 2x2 complex (8 reals), y: 2 reals (phases)
        let lx = t.const_left_mul(left, x, 2);
        let p = t.phase(y);
        let map = Arc::new({
            let mut b = SparseMap::builder(4);
            b.row(&[(0, 1.0)], 0.0).row(&[(1, 1.0)], 0.0).row(&[(2, 1.0)], 0.0).row(&[(3, 1.0)], 0.0);
            b.build()
        });
        let pv = t.linear(map, p);
        let prod = t.matmul(lx, pv, 2, 2, 1);
        let xr = t.const_right_mul(x, right, 2);
        let both = t.add(prod, xr);
        let adj = t.adjoint(both, 2, 1);
        let gram = t.matmul(adj, both, 1, 2, 1);
        let a2 = t.abs2(both);
        let proj = t.project_power(a2, 0.5);
        let sg = t.sigmoid(proj);
        let th = t.tanh(a2);
        let m = t.mul(sg, th);
        let one = t.offset(a2, &[1.0, 1.0]);
        let d = t.div(m, one);
        let l = t.ln(one);
        let s = t.sub(d, l);
        let sc = t.scale(s, 1.7);
        let mn = t.min(sc);
        let ssum = t.sum(sc);
        let g2 = t.sum_sq(gram);
        let cat = t.concat(&[mn, ssum, g2]);
        t.sum(cat)
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let x0 = vec![0.4, -0.3, 0.2, 0.9, -1.1, 0.5, 0.7, 0.1];
        let y0 = vec![0.3, -1.2];
        let mut t = Tape::new();
        let x = t.leaf(x0.clone());
        let y = t.leaf(y0.clone());
        let l = kitchen_sink(&mut t, x, y);
        let r = grad(&t, l, &[x, y]).unwrap();

        let eval = |xs: &[f64], ys: &[f64]| {
            let mut t = Tape::new();
            let x = t.leaf(xs.to_vec());
            let y = t.leaf(ys.to_vec());
            let l = kitchen_sink(&mut t, x, y);
            t.scalar(l)
        };
        let fx = finite_diff_grad(|xs| eval(xs, &y0), &x0, 1e-6).unwrap();
        let fy = finite_diff_grad(|ys| eval(&x0, ys), &y0, 1e-6).unwrap();
        assert!(max_rel_err(&r.grads[0], &fx) < 1e-6, "{:?} vs {:?}", r.grads[0], fx);
        assert!(max_rel_err(&r.grads[1], &fy) < 1e-6, "{:?} vs {:?}", r.grads[1], fy);
    }

    #[test]
    fn affine_matches_finite_differences() {
        // 3 -> 2 layer: W (2x3) then b (2)
        let theta0 = vec![0.1, -0.4, 0.3, 0.8, 0.2, -0.5, 0.05, -0.1];
        let x0 = vec![0.7, -0.2, 1.3];
        let build = |t: &mut Tape<f64>, th: Var, x: Var| {
            let y = t.affine(th, 0, 6, x, 2, 3);
            let z = t.tanh(y);
            t.sum_sq(z)
        };
        let mut t = Tape::new();
        let th = t.leaf(theta0.clone());
        let x = t.leaf(x0.clone());
        let l = build(&mut t, th, x);
        let r = grad(&t, l, &[th, x]).unwrap();
        let eval = |a: &[f64], b: &[f64]| {
            let mut t = Tape::new();
            let th = t.leaf(a.to_vec());
            let x = t.leaf(b.to_vec());
            let l = build(&mut t, th, x);
            t.scalar(l)
        };
        let f_th = finite_diff_grad(|a| eval(a, &x0), &theta0, 1e-6).unwrap();
        let f_x = finite_diff_grad(|b| eval(&theta0, b), &x0, 1e-6).unwrap();
        assert!(max_rel_err(&r.grads[0], &f_th) < 1e-6);
        assert!(max_rel_err(&r.grads[1], &f_x) < 1e-6);
    }

    #[test]
    fn truncate_and_rerecord() {
        let mut t = Tape::new();
        let x = t.leaf(vec![1.0, 2.0]);
        let mark = t.len();
        let l = t.sum_sq(x);
        assert_eq!(t.scalar(l), 5.0);
        t.truncate(mark);
        t.leaf_value_mut(x)[0] = 3.0;
        let l = t.sum_sq(x);
        assert_eq!(t.scalar(l), 13.0);
    }
}
