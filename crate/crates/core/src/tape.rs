//! Reverse-mode automatic differentiation on a Wengert list.
//!
//! Every node holds a dense row-major matrix (`Tensor`); scalars are `1×1`
//! and vectors are columns `n×1`. [`Tape::backward`] records the adjoint
//! computation on the same tape using ordinary differentiable ops, so the
//! gradients it returns are themselves `Var`s that can be differentiated
//! again. This is what makes penalties on `‖∇ₓD(x)‖²` trainable: their
//! parameter gradient is a derivative of a derivative.
//!
//! Tie-breaking conventions for non-smooth ops:
//! - `relu'(0) = 0`
//! - `max(a, c)` takes its derivative from `a` when `a == c`
//! - `sqrt'(0) = 0`

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                op: "tensor",
                lhs: (rows, cols),
                rhs: (data.len(), 1),
            });
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    /// Column vector.
    pub fn column(values: &[f64]) -> Self {
        Tensor {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    /// Stacks equal-length points as the rows of a matrix.
    pub fn from_rows(points: &[Vec<f64>]) -> Result<Self> {
        let cols = points.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(points.len() * cols);
        for p in points {
            if p.len() != cols {
                return Err(Error::Dimension {
                    op: "from_rows",
                    lhs: (1, cols),
                    rhs: (1, p.len()),
                });
            }
            data.extend_from_slice(p);
        }
        Ok(Tensor {
            rows: points.len(),
            cols,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    index: usize,
    tape: u64,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

/// Length marker returned by [`Tape::checkpoint`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Checkpoint {
    len: usize,
    tape: u64,
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Const,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Square(usize),
    Sqrt(usize),
    MaxScalar(usize, f64),
    Relu(usize),
    Tanh(usize),
    Sum(usize),
    Mean(usize),
    Broadcast(usize),
    Dot(usize, usize),
    SqNorm(usize),
    MatMul {
        a: usize,
        b: usize,
        ta: bool,
        tb: bool,
    },
}

impl Op {
    fn parents(&self) -> [Option<usize>; 2] {
        use Op::*;
        match *self {
            Const => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Dot(a, b) => [Some(a), Some(b)],
            MatMul { a, b, .. } => [Some(a), Some(b)],
            Neg(a)
            | Scale(a, _)
            | AddScalar(a)
            | Square(a)
            | Sqrt(a)
            | MaxScalar(a, _)
            | Relu(a)
            | Tanh(a)
            | Sum(a)
            | Mean(a)
            | Broadcast(a)
            | SqNorm(a) => [Some(a), None],
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only computation record. Not `Sync`; one tape per thread of work.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    adjoint_fault: Option<f64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            adjoint_fault: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            len: self.nodes.len(),
            tape: self.id,
        }
    }

    /// Drops every node recorded after `cp`. Vars created after the
    /// checkpoint are invalidated.
    pub fn truncate(&mut self, cp: Checkpoint) -> Result<()> {
        if cp.tape != self.id {
            return Err(Error::ForeignVar { index: cp.len });
        }
        self.nodes.truncate(cp.len);
        Ok(())
    }

    /// Scales every tanh adjoint by `factor`. Only used to build negative
    /// controls for the gradient checker.
    #[doc(hidden)]
    pub fn corrupt_adjoints(&mut self, factor: f64) {
        self.adjoint_fault = Some(factor);
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var {
            index: self.nodes.len() - 1,
            tape: self.id,
        }
    }

    fn var(&self, index: usize) -> Var {
        Var {
            index,
            tape: self.id,
        }
    }

    fn node(&self, v: Var) -> Result<&Tensor> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::ForeignVar { index: v.index });
        }
        Ok(&self.nodes[v.index].value)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        self.node(v)
    }

    /// Value of a `1×1` node.
    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        let t = self.node(v)?;
        if !t.is_scalar() {
            return Err(Error::NotScalar {
                op: "scalar_value",
                shape: t.shape(),
            });
        }
        Ok(t.data[0])
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Const, value)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn vector(&mut self, values: &[f64]) -> Var {
        self.constant(Tensor::column(values))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(&Tensor, &Tensor)> {
        let ta = self.node(a)?;
        let tb = self.node(b)?;
        if ta.shape() != tb.shape() {
            return Err(Error::Dimension {
                op,
                lhs: ta.shape(),
                rhs: tb.shape(),
            });
        }
        Ok((ta, tb))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = self.same_shape("add", a, b)?;
        let v = ta.zip(tb, |x, y| x + y);
        Ok(self.push(Op::Add(a.index, b.index), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = self.same_shape("sub", a, b)?;
        let v = ta.zip(tb, |x, y| x - y);
        Ok(self.push(Op::Sub(a.index, b.index), v))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = self.same_shape("mul", a, b)?;
        let v = ta.zip(tb, |x, y| x * y);
        Ok(self.push(Op::Mul(a.index, b.index), v))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = self.same_shape("div", a, b)?;
        let v = ta.zip(tb, |x, y| x / y);
        Ok(self.push(Op::Div(a.index, b.index), v))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        let v = self.node(a)?.map(|x| -x);
        Ok(self.push(Op::Neg(a.index), v))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.node(a)?.map(|x| c * x);
        Ok(self.push(Op::Scale(a.index, c), v))
    }

    /// Addition of a constant to every element.
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.node(a)?.map(|x| x + c);
        Ok(self.push(Op::AddScalar(a.index), v))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let v = self.node(a)?.map(|x| x * x);
        Ok(self.push(Op::Square(a.index), v))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let v = self.node(a)?.map(f64::sqrt);
        Ok(self.push(Op::Sqrt(a.index), v))
    }

    /// Elementwise `max(a, c)`.
    pub fn max_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.node(a)?.map(|x| if x >= c { x } else { c });
        Ok(self.push(Op::MaxScalar(a.index, c), v))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.node(a)?.map(|x| if x > 0.0 { x } else { 0.0 });
        Ok(self.push(Op::Relu(a.index), v))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let v = self.node(a)?.map(f64::tanh);
        Ok(self.push(Op::Tanh(a.index), v))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.node(a)?.data.iter().sum();
        Ok(self.push(Op::Sum(a.index), Tensor::scalar(s)))
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.node(a)?;
        let s = t.data.iter().sum::<f64>() / t.len() as f64;
        Ok(self.push(Op::Mean(a.index), Tensor::scalar(s)))
    }

    /// Repeats a scalar into a `rows×cols` matrix.
    pub fn broadcast(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let t = self.node(a)?;
        if !t.is_scalar() {
            return Err(Error::NotScalar {
                op: "broadcast",
                shape: t.shape(),
            });
        }
        let v = Tensor::filled(rows, cols, t.data[0]);
        Ok(self.push(Op::Broadcast(a.index), v))
    }

    /// Frobenius inner product, as a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = self.same_shape("dot", a, b)?;
        let s = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).sum();
        Ok(self.push(Op::Dot(a.index, b.index), Tensor::scalar(s)))
    }

    /// Sum of squared elements, as a scalar.
    pub fn sq_norm(&mut self, a: Var) -> Result<Var> {
        let s = self.node(a)?.data.iter().map(|x| x * x).sum();
        Ok(self.push(Op::SqNorm(a.index), Tensor::scalar(s)))
    }

    /// `op(a) · op(b)` where `op` transposes when the flag is set.
    pub fn matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let xa = self.node(a)?;
        let xb = self.node(b)?;
        let inner_a = if ta { xa.rows } else { xa.cols };
        let inner_b = if tb { xb.cols } else { xb.rows };
        if inner_a != inner_b {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: xa.shape(),
                rhs: xb.shape(),
            });
        }
        let v = matmul_kernel(xa, xb, ta, tb);
        Ok(self.push(
            Op::MatMul {
                a: a.index,
                b: b.index,
                ta,
                tb,
            },
            v,
        ))
    }

    /// Matrix times column vector.
    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var> {
        let tx = self.node(x)?;
        if tx.cols != 1 {
            return Err(Error::Dimension {
                op: "matvec",
                lhs: self.node(a)?.shape(),
                rhs: tx.shape(),
            });
        }
        self.matmul(a, x, false, false)
    }

    /// Gradients of the scalar `root` with respect to each of `wrt`.
    ///
    /// The adjoint sweep is recorded on this tape, so each returned `Var`
    /// can itself be a root (or part of one) for a further `backward`.
    /// Inputs that `root` does not depend on get a zero gradient.
    pub fn backward(&mut self, root: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        let shape = self.node(root)?.shape();
        if shape != (1, 1) {
            return Err(Error::NotScalar {
                op: "backward",
                shape,
            });
        }
        for &w in wrt {
            self.node(w)?;
        }

        let end = root.index + 1;
        let mut relevant = vec![false; end];
        for w in wrt {
            if w.index < end {
                relevant[w.index] = true;
            }
        }
        for i in 0..end {
            if !relevant[i] {
                relevant[i] = self.nodes[i]
                    .op
                    .parents()
                    .iter()
                    .flatten()
                    .any(|&p| relevant[p]);
            }
        }

        let mut adjoints: Vec<Option<Var>> = vec![None; end];
        if relevant[root.index] {
            adjoints[root.index] = Some(self.scalar(1.0));
        }
        for i in (0..end).rev() {
            let Some(g) = adjoints[i] else { continue };
            let op = self.nodes[i].op;
            for (parent, contribution) in self.adjoint(op, i, g, &relevant)? {
                adjoints[parent] = Some(match adjoints[parent] {
                    Some(acc) => self.add(acc, contribution)?,
                    None => contribution,
                });
            }
        }

        wrt.iter()
            .map(|&w| match adjoints.get(w.index).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let (r, c) = self.nodes[w.index].value.shape();
                    Ok(self.constant(Tensor::zeros(r, c)))
                }
            })
            .collect()
    }

    /// Records the vector-Jacobian product of node `i` for each relevant parent.
    fn adjoint(
        &mut self,
        op: Op,
        i: usize,
        g: Var,
        relevant: &[bool],
    ) -> Result<Vec<(usize, Var)>> {
        let out = self.var(i);
        let need = |p: usize| relevant[p];
        let mut contributions = Vec::with_capacity(2);
        match op {
            Op::Const => {}
            Op::Add(a, b) => {
                if need(a) {
                    contributions.push((a, g));
                }
                if need(b) {
                    contributions.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if need(a) {
                    contributions.push((a, g));
                }
                if need(b) {
                    contributions.push((b, self.neg(g)?));
                }
            }
            Op::Mul(a, b) => {
                if need(a) {
                    contributions.push((a, self.mul(g, self.var(b))?));
                }
                if need(b) {
                    contributions.push((b, self.mul(g, self.var(a))?));
                }
            }
            Op::Div(a, b) => {
                let vb = self.var(b);
                if need(a) {
                    contributions.push((a, self.div(g, vb)?));
                }
                if need(b) {
                    let t = self.mul(g, out)?;
                    let t = self.div(t, vb)?;
                    contributions.push((b, self.neg(t)?));
                }
            }
            Op::Neg(a) => contributions.push((a, self.neg(g)?)),
            Op::Scale(a, c) => contributions.push((a, self.scale(g, c)?)),
            Op::AddScalar(a) => contributions.push((a, g)),
            Op::Square(a) => {
                let twice = self.scale(self.var(a), 2.0)?;
                contributions.push((a, self.mul(g, twice)?));
            }
            Op::Sqrt(a) => {
                let value = &self.nodes[i].value;
                let has_zero = value.data.contains(&0.0);
                let twice = self.scale(out, 2.0)?;
                if has_zero {
                    let zero_mask = self.nodes[i]
                        .value
                        .map(|x| if x == 0.0 { 1.0 } else { 0.0 });
                    let pos_mask = self.nodes[i]
                        .value
                        .map(|x| if x == 0.0 { 0.0 } else { 1.0 });
                    let zero_mask = self.constant(zero_mask);
                    let pos_mask = self.constant(pos_mask);
                    let denom = self.add(twice, zero_mask)?;
                    let q = self.div(g, denom)?;
                    contributions.push((a, self.mul(q, pos_mask)?));
                } else {
                    contributions.push((a, self.div(g, twice)?));
                }
            }
            Op::MaxScalar(a, c) => {
                let mask = self.nodes[a].value.map(|x| if x >= c { 1.0 } else { 0.0 });
                let mask = self.constant(mask);
                contributions.push((a, self.mul(g, mask)?));
            }
            Op::Relu(a) => {
                let mask = self.nodes[a].value.map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                let mask = self.constant(mask);
                contributions.push((a, self.mul(g, mask)?));
            }
            Op::Tanh(a) => {
                let sq = self.square(out)?;
                let one_minus = self.neg(sq)?;
                let one_minus = self.add_scalar(one_minus, 1.0)?;
                let mut d = self.mul(g, one_minus)?;
                if let Some(f) = self.adjoint_fault {
                    d = self.scale(d, f)?;
                }
                contributions.push((a, d));
            }
            Op::Sum(a) => {
                let (r, c) = self.nodes[a].value.shape();
                contributions.push((a, self.broadcast(g, r, c)?));
            }
            Op::Mean(a) => {
                let (r, c) = self.nodes[a].value.shape();
                let scaled = self.scale(g, 1.0 / (r * c) as f64)?;
                contributions.push((a, self.broadcast(scaled, r, c)?));
            }
            Op::Broadcast(a) => contributions.push((a, self.sum(g)?)),
            Op::Dot(a, b) => {
                let (r, c) = self.nodes[a].value.shape();
                let gb = self.broadcast(g, r, c)?;
                if need(a) {
                    contributions.push((a, self.mul(gb, self.var(b))?));
                }
                if need(b) {
                    contributions.push((b, self.mul(gb, self.var(a))?));
                }
            }
            Op::SqNorm(a) => {
                let (r, c) = self.nodes[a].value.shape();
                let gb = self.broadcast(g, r, c)?;
                let twice = self.scale(self.var(a), 2.0)?;
                contributions.push((a, self.mul(gb, twice)?));
            }
            Op::MatMul { a, b, ta, tb } => {
                let (va, vb) = (self.var(a), self.var(b));
                if need(a) {
                    let ga = if ta {
                        self.matmul(vb, g, tb, true)?
                    } else {
                        self.matmul(g, vb, false, !tb)?
                    };
                    contributions.push((a, ga));
                }
                if need(b) {
                    let gb = if tb {
                        self.matmul(g, va, true, ta)?
                    } else {
                        self.matmul(va, g, !ta, false)?
                    };
                    contributions.push((b, gb));
                }
            }
        }
        Ok(contributions)
    }
}

fn matmul_kernel(a: &Tensor, b: &Tensor, ta: bool, tb: bool) -> Tensor {
    let (m, k) = if ta {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    let n = if tb { b.rows } else { b.cols };
    let mut c = vec![0.0; m * n];
    match (ta, tb) {
        (false, false) => {
            for i in 0..m {
                let crow = &mut c[i * n..(i + 1) * n];
                for p in 0..k {
                    let aip = a.data[i * k + p];
                    let brow = &b.data[p * n..(p + 1) * n];
                    for (cj, bj) in crow.iter_mut().zip(brow) {
                        *cj += aip * bj;
                    }
                }
            }
        }
        (false, true) => {
            for i in 0..m {
                let arow = &a.data[i * k..(i + 1) * k];
                for j in 0..n {
                    let brow = &b.data[j * k..(j + 1) * k];
                    c[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
                }
            }
        }
        (true, false) => {
            for p in 0..k {
                let arow = &a.data[p * m..(p + 1) * m];
                let brow = &b.data[p * n..(p + 1) * n];
                for (i, &api) in arow.iter().enumerate() {
                    let crow = &mut c[i * n..(i + 1) * n];
                    for (cj, bj) in crow.iter_mut().zip(brow) {
                        *cj += api * bj;
                    }
                }
            }
        }
        (true, true) => {
            for i in 0..m {
                for j in 0..n {
                    let mut s = 0.0;
                    for p in 0..k {
                        s += a.data[p * m + i] * b.data[j * k + p];
                    }
                    c[i * n + j] = s;
                }
            }
        }
    }
    Tensor {
        rows: m,
        cols: n,
        data: c,
    }
}
