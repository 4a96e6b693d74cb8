//! Define-by-run computation graph.
//!
//! Every op evaluates eagerly when it is recorded, so the value of any [`Var`]
//! is available immediately. [`Graph::backward`] then replays the tape in
//! reverse and returns the gradient of a scalar root with respect to every
//! node that requires one.

use std::sync::Arc;

use super::matrix::{gemm_nt, gemm_tn, Matrix};
use super::params::{ParamId, ParamStore};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },
    #[error("backward requires a 1x1 root, got {0:?}")]
    NonScalarRoot((usize, usize)),
    #[error("masked softmax row {row} has no unmasked position")]
    EmptyMaskRow { row: usize },
    #[error("{op}: {detail}")]
    Invalid { op: &'static str, detail: String },
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Which primitive produced a node.
#[derive(Clone, Debug)]
pub enum Op {
    /// Constant input; never receives a gradient.
    Constant,
    /// Differentiable input that is not a stored parameter.
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// `x + b` with the `1 × c` row `b` broadcast over the rows of `x`.
    AddRow(Var, Var),
    Mul(Var, Var),
    /// `s ⊙ x` with the `r × 1` column `s` broadcast over the columns of `x`.
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    Reshape(Var),
    Gather { table: Var, rows: Arc<[usize]> },
    RepeatRows(Var),
    Transpose(Var),
    MaskedSoftmax { x: Var, mask: Arc<[bool]> },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Hinge(Var),
    Log(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    MeanRows(Var),
    Sum(Var),
    SqDist(Var, Var),
    SegmentWeightedSum { weights: Var, rows: Var },
}

impl Op {
    pub fn tag(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::MulCol(..) => "mul_col",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::Reshape(_) => "reshape",
            Op::Gather { .. } => "gather",
            Op::RepeatRows(_) => "repeat_rows",
            Op::Transpose(_) => "transpose",
            Op::MaskedSoftmax { .. } => "masked_softmax",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Hinge(_) => "hinge",
            Op::Log(_) => "log",
            Op::Clamp { .. } => "clamp",
            Op::MeanRows(_) => "mean_rows",
            Op::Sum(_) => "sum",
            Op::SqDist(..) => "sq_dist",
            Op::SegmentWeightedSum { .. } => "segment_weighted_sum",
        }
    }

    pub fn parents(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.visit_parents(|v| out.push(v));
        out
    }

    pub fn visit_parents(&self, mut f: impl FnMut(Var)) {
        match self {
            Op::Constant | Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::AddRow(a, b)
            | Op::Mul(a, b)
            | Op::MulCol(a, b)
            | Op::SqDist(a, b)
            | Op::SegmentWeightedSum { weights: a, rows: b } => {
                f(*a);
                f(*b);
            }
            Op::ConcatCols(xs) | Op::ConcatRows(xs) => xs.iter().copied().for_each(f),
            Op::Scale(x, _)
            | Op::AddScalar(x, _)
            | Op::RepeatRows(x)
            | Op::Transpose(x)
            | Op::Sigmoid(x)
            | Op::Tanh(x)
            | Op::Relu(x)
            | Op::Hinge(x)
            | Op::Log(x)
            | Op::MeanRows(x)
            | Op::Sum(x)
            | Op::SliceCols { x, .. }
            | Op::SliceRows { x, .. }
            | Op::Reshape(x)
            | Op::MaskedSoftmax { x, .. }
            | Op::Clamp { x, .. }
            | Op::Gather { table: x, .. } => f(*x),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub value: Matrix,
    pub op: Op,
    requires_grad: bool,
}

impl Node {
    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<Option<Var>>,
}

/// Gradients of a scalar root with respect to the nodes of one graph.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// `None` when the node is unreachable from the root or needs no gradient.
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `var`, zero-filled when the node is unreachable.
    pub fn wrt(&self, graph: &Graph, var: Var) -> Matrix {
        match self.get(var) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = graph.shape(var);
                Matrix::zeros(r, c)
            }
        }
    }
}

fn check_same(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(GraphError::ShapeMismatch { op, lhs: a.shape(), rhs: b.shape() });
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    pub fn node(&self, var: Var) -> &Node {
        &self.nodes[var.0]
    }

    #[inline]
    pub fn value(&self, var: Var) -> &Matrix {
        &self.nodes[var.0].value
    }

    #[inline]
    pub fn shape(&self, var: Var) -> (usize, usize) {
        self.nodes[var.0].value.shape()
    }

    /// Value of the root; ops evaluate as they are recorded so this is a lookup.
    pub fn forward_eval(&self, root: Var) -> &Matrix {
        self.value(root)
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        let requires_grad = match &op {
            Op::Constant => false,
            Op::Input | Op::Param(_) => true,
            other => {
                let mut any = false;
                other.visit_parents(|p| any |= self.nodes[p.0].requires_grad);
                any
            }
        };
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// A differentiable leaf that is not backed by a [`ParamStore`].
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input)
    }

    /// Leaf holding a copy of a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let idx = id.index();
        if self.params.len() <= idx {
            self.params.resize(idx + 1, None);
        }
        if let Some(v) = self.params[idx] {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.params[idx] = Some(v);
        v
    }

    /// Parameter leaves recorded in this graph, in parameter-id order.
    pub fn param_vars(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.params.iter().enumerate().filter_map(|(i, v)| v.map(|v| (ParamId::new(i), v)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(GraphError::ShapeMismatch { op: "matmul", lhs: av.shape(), rhs: bv.shape() });
        }
        let out = av.matmul(bv);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn zip_with(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        let (av, bv) = (self.value(a), self.value(b));
        check_same(op, av, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Matrix::from_vec(av.rows(), av.cols(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(GraphError::ShapeMismatch { op: "add_row", lhs: xv.shape(), rhs: bv.shape() });
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    pub fn mul_col(&mut self, s: Var, x: Var) -> Result<Var> {
        let (sv, xv) = (self.value(s), self.value(x));
        if sv.cols() != 1 || sv.rows() != xv.rows() {
            return Err(GraphError::ShapeMismatch { op: "mul_col", lhs: sv.shape(), rhs: xv.shape() });
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let k = sv.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|o| *o *= k);
        }
        Ok(self.push(out, Op::MulCol(s, x)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        self.push(out, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v + c);
        self.push(out, Op::AddScalar(x, c))
    }

    /// `1 - x`
    pub fn one_minus(&mut self, x: Var) -> Var {
        let neg = self.scale(x, -1.0);
        self.add_scalar(neg, 1.0)
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs.first().ok_or(GraphError::Invalid { op: "concat_cols", detail: "no operands".into() })?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &x in xs {
            let v = self.value(x);
            if v.rows() != rows {
                return Err(GraphError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.value(*first).shape(),
                    rhs: v.shape(),
                });
            }
            cols += v.cols();
        }
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &x in xs {
                let src = self.value(x).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(xs.to_vec())))
    }

    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs.first().ok_or(GraphError::Invalid { op: "concat_rows", detail: "no operands".into() })?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &x in xs {
            let v = self.value(x);
            if v.cols() != cols {
                return Err(GraphError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.value(*first).shape(),
                    rhs: v.shape(),
                });
            }
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        Ok(self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(xs.to_vec())))
    }

    /// Columns `start..start + width` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + width > xv.cols() {
            return Err(GraphError::Invalid {
                op: "slice_cols",
                detail: format!("columns {start}..{} out of range for {:?}", start + width, xv.shape()),
            });
        }
        let out = Matrix::from_fn(xv.rows(), width, |r, c| xv.get(r, start + c));
        Ok(self.push(out, Op::SliceCols { x, start }))
    }

    /// Rows `start..start + count` of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, count: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + count > xv.rows() {
            return Err(GraphError::Invalid {
                op: "slice_rows",
                detail: format!("rows {start}..{} out of range for {:?}", start + count, xv.shape()),
            });
        }
        let c = xv.cols();
        let out = Matrix::from_vec(count, c, xv.data()[start * c..(start + count) * c].to_vec());
        Ok(self.push(out, Op::SliceRows { x, start }))
    }

    /// Same row-major payload viewed as `rows × cols`.
    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let xv = self.value(x);
        if rows * cols != xv.len() {
            return Err(GraphError::ShapeMismatch { op: "reshape", lhs: xv.shape(), rhs: (rows, cols) });
        }
        let out = Matrix::from_vec(rows, cols, xv.data().to_vec());
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// Row lookup: output row `i` is `table[rows[i]]`.
    pub fn gather(&mut self, table: Var, rows: impl Into<Arc<[usize]>>) -> Result<Var> {
        let rows: Arc<[usize]> = rows.into();
        let tv = self.value(table);
        if let Some(&bad) = rows.iter().find(|&&r| r >= tv.rows()) {
            return Err(GraphError::Invalid {
                op: "gather",
                detail: format!("row {bad} out of range for {:?}", tv.shape()),
            });
        }
        let d = tv.cols();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows.iter() {
            data.extend_from_slice(tv.row(r));
        }
        let out = Matrix::from_vec(rows.len(), d, data);
        Ok(self.push(out, Op::Gather { table, rows }))
    }

    /// Stack `n` copies of the `1 × c` row `x`.
    pub fn repeat_rows(&mut self, x: Var, n: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() != 1 {
            return Err(GraphError::ShapeMismatch { op: "repeat_rows", lhs: xv.shape(), rhs: (1, xv.cols()) });
        }
        let mut data = Vec::with_capacity(n * xv.cols());
        for _ in 0..n {
            data.extend_from_slice(xv.data());
        }
        let out = Matrix::from_vec(n, xv.cols(), data);
        Ok(self.push(out, Op::RepeatRows(x)))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        self.push(out, Op::Transpose(x))
    }

    /// Row-wise softmax restricted to positions where `mask` is true.
    ///
    /// `mask` has one entry per element of `x` (row-major). Masked positions get
    /// exactly zero weight and the remaining ones are renormalized.
    pub fn masked_softmax(&mut self, x: Var, mask: impl Into<Arc<[bool]>>) -> Result<Var> {
        let mask: Arc<[bool]> = mask.into();
        let xv = self.value(x);
        if mask.len() != xv.len() {
            return Err(GraphError::ShapeMismatch { op: "masked_softmax", lhs: xv.shape(), rhs: (mask.len(), 1) });
        }
        let (rows, cols) = xv.shape();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let m = &mask[r * cols..(r + 1) * cols];
            let row = xv.row(r);
            let max = row
                .iter()
                .zip(m)
                .filter(|(_, &on)| on)
                .map(|(&v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(GraphError::EmptyMaskRow { row: r });
            }
            let dst = out.row_mut(r);
            let mut total = 0.0;
            for ((o, &v), &on) in dst.iter_mut().zip(row).zip(m) {
                if on {
                    *o = (v - max).exp();
                    total += *o;
                }
            }
            dst.iter_mut().for_each(|o| *o /= total);
        }
        Ok(self.push(out, Op::MaskedSoftmax { x, mask }))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let mask: Arc<[bool]> = vec![true; self.value(x).len()].into();
        self.masked_softmax(x, mask)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(out, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    /// `max(x, 0)`; same map as relu, kept as its own tag for loss terms.
    pub fn hinge(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Hinge(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::ln);
        self.push(out, Op::Log(x))
    }

    /// Clamp into `[lo, hi]`; the gradient is blocked where clamping happened.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(out, Op::Clamp { x, lo, hi })
    }

    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() == 0 {
            return Err(GraphError::Invalid { op: "mean_rows", detail: "no rows".into() });
        }
        let n = xv.rows() as f64;
        let mut out = Matrix::zeros(1, xv.cols());
        for r in 0..xv.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(xv.row(r)) {
                *o += v;
            }
        }
        out.data_mut().iter_mut().for_each(|o| *o /= n);
        Ok(self.push(out, Op::MeanRows(x)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Matrix::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x))
    }

    /// Row-wise squared Euclidean distance, `r × 1`.
    pub fn sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        check_same("sq_dist", av, bv)?;
        let out = Matrix::from_fn(av.rows(), 1, |r, _| {
            av.row(r).iter().zip(bv.row(r)).map(|(x, y)| (x - y) * (x - y)).sum()
        });
        Ok(self.push(out, Op::SqDist(a, b)))
    }

    /// Row `n` of the output is `Σ_i weights[n, i] · rows[n·l + i]`, with `l = weights.cols()`.
    pub fn segment_weighted_sum(&mut self, weights: Var, rows: Var) -> Result<Var> {
        let (wv, rv) = (self.value(weights), self.value(rows));
        let (k, l) = wv.shape();
        if rv.rows() != k * l {
            return Err(GraphError::ShapeMismatch { op: "segment_weighted_sum", lhs: wv.shape(), rhs: rv.shape() });
        }
        let d = rv.cols();
        let mut out = Matrix::zeros(k, d);
        for n in 0..k {
            let dst = out.row_mut(n);
            for i in 0..l {
                let w = wv.get(n, i);
                if w == 0.0 {
                    continue;
                }
                for (o, v) in dst.iter_mut().zip(rv.row(n * l + i)) {
                    *o += w * v;
                }
            }
        }
        Ok(self.push(out, Op::SegmentWeightedSum { weights, rows }))
    }

    /// Reverse pass from a `1 × 1` root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let shape = self.shape(root);
        if shape != (1, 1) {
            return Err(GraphError::NonScalarRoot(shape));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Matrix::scalar(1.0));

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let mut acc = |var: Var, f: &mut dyn FnMut(&mut Matrix)| {
            let target = &self.nodes[var.0];
            if !target.requires_grad {
                return;
            }
            let slot = grads[var.0].get_or_insert_with(|| {
                let (r, c) = target.value.shape();
                Matrix::zeros(r, c)
            });
            f(slot);
        };

        match &node.op {
            Op::Constant | Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |ga| gemm_nt(g, bv, ga));
                acc(*b, &mut |gb| gemm_tn(av, g, gb));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.add_assign(g));
                acc(*b, &mut |gb| gb.add_assign(g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| ga.add_assign(g));
                acc(*b, &mut |gb| gb.axpy(-1.0, g));
            }
            Op::AddRow(x, b) => {
                acc(*x, &mut |gx| gx.add_assign(g));
                acc(*b, &mut |gb| {
                    for r in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |ga| {
                    for ((o, gv), y) in ga.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                        *o += gv * y;
                    }
                });
                acc(*b, &mut |gb| {
                    for ((o, gv), x) in gb.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        *o += gv * x;
                    }
                });
            }
            Op::MulCol(s, x) => {
                let (sv, xv) = (self.value(*s), self.value(*x));
                acc(*s, &mut |gs| {
                    for r in 0..g.rows() {
                        let dot: f64 = g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum();
                        gs.data_mut()[r] += dot;
                    }
                });
                acc(*x, &mut |gx| {
                    for r in 0..g.rows() {
                        let k = sv.get(r, 0);
                        for (o, v) in gx.row_mut(r).iter_mut().zip(g.row(r)) {
                            *o += k * v;
                        }
                    }
                });
            }
            Op::Scale(x, c) => acc(*x, &mut |gx| gx.axpy(*c, g)),
            Op::AddScalar(x, _) => acc(*x, &mut |gx| gx.add_assign(g)),
            Op::ConcatCols(xs) => {
                let mut off = 0;
                for &x in xs {
                    let w = self.value(x).cols();
                    acc(x, &mut |gx| {
                        for r in 0..g.rows() {
                            for (o, v) in gx.row_mut(r).iter_mut().zip(&g.row(r)[off..off + w]) {
                                *o += v;
                            }
                        }
                    });
                    off += w;
                }
            }
            Op::ConcatRows(xs) => {
                let mut off = 0;
                for &x in xs {
                    let n = self.value(x).len();
                    acc(x, &mut |gx| {
                        for (o, v) in gx.data_mut().iter_mut().zip(&g.data()[off..off + n]) {
                            *o += v;
                        }
                    });
                    off += n;
                }
            }
            Op::SliceCols { x, start } => {
                let w = g.cols();
                acc(*x, &mut |gx| {
                    for r in 0..g.rows() {
                        for (o, v) in gx.row_mut(r)[*start..*start + w].iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                });
            }
            Op::SliceRows { x, start } => {
                let c = g.cols();
                acc(*x, &mut |gx| {
                    for (o, v) in gx.data_mut()[start * c..].iter_mut().zip(g.data()) {
                        *o += v;
                    }
                });
            }
            Op::Reshape(x) => acc(*x, &mut |gx| {
                for (o, v) in gx.data_mut().iter_mut().zip(g.data()) {
                    *o += v;
                }
            }),
            Op::Gather { table, rows } => acc(*table, &mut |gt| {
                for (i, &r) in rows.iter().enumerate() {
                    for (o, v) in gt.row_mut(r).iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
            }),
            Op::RepeatRows(x) => acc(*x, &mut |gx| {
                for r in 0..g.rows() {
                    for (o, v) in gx.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
            }),
            Op::Transpose(x) => acc(*x, &mut |gx| gx.add_assign(&g.transpose())),
            Op::MaskedSoftmax { x, .. } => {
                let y = &node.value;
                acc(*x, &mut |gx| {
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((o, &yv), &gv) in gx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o += yv * (gv - dot);
                        }
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                acc(*x, &mut |gx| {
                    for ((o, &yv), &gv) in gx.data_mut().iter_mut().zip(y.data()).zip(g.data()) {
                        *o += gv * yv * (1.0 - yv);
                    }
                });
            }
            Op::Tanh(x) => {
                let y = &node.value;
                acc(*x, &mut |gx| {
                    for ((o, &yv), &gv) in gx.data_mut().iter_mut().zip(y.data()).zip(g.data()) {
                        *o += gv * (1.0 - yv * yv);
                    }
                });
            }
            Op::Relu(x) | Op::Hinge(x) => {
                let xv = self.value(*x);
                acc(*x, &mut |gx| {
                    for ((o, &v), &gv) in gx.data_mut().iter_mut().zip(xv.data()).zip(g.data()) {
                        if v > 0.0 {
                            *o += gv;
                        }
                    }
                });
            }
            Op::Log(x) => {
                let xv = self.value(*x);
                acc(*x, &mut |gx| {
                    for ((o, &v), &gv) in gx.data_mut().iter_mut().zip(xv.data()).zip(g.data()) {
                        *o += gv / v;
                    }
                });
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x);
                acc(*x, &mut |gx| {
                    for ((o, &v), &gv) in gx.data_mut().iter_mut().zip(xv.data()).zip(g.data()) {
                        if v >= *lo && v <= *hi {
                            *o += gv;
                        }
                    }
                });
            }
            Op::MeanRows(x) => {
                let n = self.value(*x).rows() as f64;
                acc(*x, &mut |gx| {
                    for r in 0..gx.rows() {
                        for (o, v) in gx.row_mut(r).iter_mut().zip(g.data()) {
                            *o += v / n;
                        }
                    }
                });
            }
            Op::Sum(x) => {
                let s = g.item();
                acc(*x, &mut |gx| gx.data_mut().iter_mut().for_each(|o| *o += s));
            }
            Op::SqDist(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let diff = |sign: f64, gm: &mut Matrix| {
                    for r in 0..av.rows() {
                        let k = 2.0 * sign * g.get(r, 0);
                        for ((o, x), y) in gm.row_mut(r).iter_mut().zip(av.row(r)).zip(bv.row(r)) {
                            *o += k * (x - y);
                        }
                    }
                };
                acc(*a, &mut |ga| diff(1.0, ga));
                acc(*b, &mut |gb| diff(-1.0, gb));
            }
            Op::SegmentWeightedSum { weights, rows } => {
                let (wv, rv) = (self.value(*weights), self.value(*rows));
                let (k, l) = wv.shape();
                acc(*weights, &mut |gw| {
                    for n in 0..k {
                        for i in 0..l {
                            let dot: f64 = g.row(n).iter().zip(rv.row(n * l + i)).map(|(a, b)| a * b).sum();
                            gw.data_mut()[n * l + i] += dot;
                        }
                    }
                });
                acc(*rows, &mut |gr| {
                    for n in 0..k {
                        for i in 0..l {
                            let w = wv.get(n, i);
                            if w == 0.0 {
                                continue;
                            }
                            for (o, v) in gr.row_mut(n * l + i).iter_mut().zip(g.row(n)) {
                                *o += w * v;
                            }
                        }
                    }
                });
            }
        }
    }
}
