//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every primitive op as a node that owns its output
//! value. Node inputs always refer to earlier nodes, so a single reverse
//! sweep over the node list is a valid topological order for backward.
//! Parameters enter as leaves copied onto the tape; nothing is mutated in
//! place, and a tape is thrown away after one backward pass.

use crate::tensor::{self, Shape, Tensor};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs} and {rhs}")]
    ShapeMismatch { op: &'static str, lhs: Shape, rhs: Shape },
    #[error("backward root must be a 1x1 scalar, got {0}")]
    NonScalarRoot(Shape),
    #[error("cannot reshape {from} into {to}")]
    BadReshape { from: Shape, to: Shape },
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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
    Add(Var, Var),
    Sub(Var, Var),
    /// `n x m` plus a `1 x m` row broadcast over every row.
    AddRow(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    /// Per-row sum, `n x m -> n x 1`.
    RowSum(Var),
    /// Per-row logsumexp, `n x m -> n x 1`.
    LogSumExpRows(Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// Clamp into `[lo, hi]`; gradient passes only strictly inside.
    Clamp(Var, f64, f64),
    /// Every row repeated `k` times consecutively.
    RepeatRows(Var, usize),
    Reshape(Var),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Shape>,
}

impl Gradients {
    /// Gradient with respect to `v`; all zeros when `v` does not reach the root.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let Shape(r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    /// Moves the gradient out, avoiding a copy.
    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let Shape(r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
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

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf (parameter or constant input).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch { op, lhs: sa, rhs: sb });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(AutodiffError::ShapeMismatch { op: "matmul", lhs: av.shape(), rhs: bv.shape() });
        }
        let out = tensor::matmul(av, bv);
        Ok(self.push(Op::MatMul(a, b), out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), out))
    }

    /// Adds the `1 x m` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(AutodiffError::ShapeMismatch { op: "add_row", lhs: av.shape(), rhs: bv.shape() });
        }
        let mut out = av.clone();
        let b = bv.as_slice();
        for r in 0..out.rows() {
            for (o, &x) in out.row_mut(r).iter_mut().zip(b) {
                *o += x;
            }
        }
        Ok(self.push(Op::AddRow(a, bias), out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), out)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), out)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        self.push(Op::Log(a), out)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        self.push(Op::Square(a), out)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), out)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::scalar(v.sum() / v.len() as f64);
        self.push(Op::Mean(a), out)
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::column((0..v.rows()).map(|r| v.row(r).iter().sum()).collect());
        self.push(Op::RowSum(a), out)
    }

    /// `m + log(sum(exp(v - m)))` per row with `m` the row max.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::column((0..v.rows()).map(|r| logsumexp(v.row(r))).collect());
        self.push(Op::LogSumExpRows(a), out)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push(Op::Scale(a, factor), out)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        self.push(Op::AddScalar(a), out)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), out)
    }

    pub fn repeat_rows(&mut self, a: Var, k: usize) -> Var {
        let v = self.value(a);
        let mut data = Vec::with_capacity(v.len() * k);
        for r in 0..v.rows() {
            for _ in 0..k {
                data.extend_from_slice(v.row(r));
            }
        }
        let out = Tensor::from_vec(v.rows() * k, v.cols(), data);
        self.push(Op::RepeatRows(a, k), out)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, AutodiffError> {
        let v = self.value(a);
        if v.len() != rows * cols {
            return Err(AutodiffError::BadReshape { from: v.shape(), to: Shape(rows, cols) });
        }
        let out = v.reshaped(rows, cols);
        Ok(self.push(Op::Reshape(a), out))
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients, AutodiffError> {
        let rs = self.value(root).shape();
        if rs != Shape(1, 1) {
            return Err(AutodiffError::NonScalarRoot(rs));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::scalar(1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = tensor::matmul_nt(&g, self.value(b));
                    let gb = tensor::matmul_tn(self.value(a), &g);
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, b, g.map(|x| -x));
                    accumulate(&mut grads, a, g.clone());
                }
                Op::AddRow(a, bias) => {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &x) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, bias, gb);
                    accumulate(&mut grads, a, g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(b), |x, y| x * y);
                    let gb = g.zip_map(self.value(a), |x, y| x * y);
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(a), |x, y| if y > 0.0 { x } else { 0.0 });
                    accumulate(&mut grads, a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * y);
                    accumulate(&mut grads, a, ga);
                }
                Op::Log(a) => {
                    let ga = g.zip_map(self.value(a), |x, y| x / y);
                    accumulate(&mut grads, a, ga);
                }
                Op::Square(a) => {
                    let ga = g.zip_map(self.value(a), |x, y| 2.0 * x * y);
                    accumulate(&mut grads, a, ga);
                }
                Op::Sum(a) => {
                    let Shape(r, c) = self.value(a).shape();
                    accumulate(&mut grads, a, Tensor::filled(r, c, g.as_slice()[0]));
                }
                Op::Mean(a) => {
                    let v = self.value(a);
                    let fill = g.as_slice()[0] / v.len() as f64;
                    accumulate(&mut grads, a, Tensor::filled(v.rows(), v.cols(), fill));
                }
                Op::RowSum(a) => {
                    let v = self.value(a);
                    let mut ga = Tensor::zeros(v.rows(), v.cols());
                    for r in 0..v.rows() {
                        let gr = g.as_slice()[r];
                        ga.row_mut(r).iter_mut().for_each(|x| *x = gr);
                    }
                    accumulate(&mut grads, a, ga);
                }
                Op::LogSumExpRows(a) => {
                    // d lse / d v_j = exp(v_j - lse)
                    let v = self.value(a);
                    let mut ga = Tensor::zeros(v.rows(), v.cols());
                    for r in 0..v.rows() {
                        let lse = node.value.as_slice()[r];
                        let gr = g.as_slice()[r];
                        for (o, &x) in ga.row_mut(r).iter_mut().zip(v.row(r)) {
                            *o = gr * (x - lse).exp();
                        }
                    }
                    accumulate(&mut grads, a, ga);
                }
                Op::Scale(a, f) => accumulate(&mut grads, a, g.map(|x| x * f)),
                Op::AddScalar(a) => accumulate(&mut grads, a, g.clone()),
                Op::Clamp(a, lo, hi) => {
                    let ga = g.zip_map(self.value(a), |x, y| if y > lo && y < hi { x } else { 0.0 });
                    accumulate(&mut grads, a, ga);
                }
                Op::RepeatRows(a, k) => {
                    let v = self.value(a);
                    let mut ga = Tensor::zeros(v.rows(), v.cols());
                    for r in 0..v.rows() {
                        let out = ga.row_mut(r);
                        for j in 0..k {
                            for (o, &x) in out.iter_mut().zip(g.row(r * k + j)) {
                                *o += x;
                            }
                        }
                    }
                    accumulate(&mut grads, a, ga);
                }
                Op::Reshape(a) => {
                    let Shape(r, c) = self.value(a).shape();
                    accumulate(&mut grads, a, g.reshaped(r, c));
                }
            }
            grads[i] = Some(g);
        }

        grads.resize(self.nodes.len(), None);
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Numerically stable `log(sum(exp(v)))`.
pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
