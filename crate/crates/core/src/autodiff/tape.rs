use std::f64::consts::PI;
use std::sync::Arc;

use super::{gemm, AutodiffError, MatView, Scalar, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds understood by [`Tape::apply`].
///
/// Axis-wise operations (`Concat`, `L2Normalize`, `Dot`, `MinReduce`,
/// `PosEncode`) act along the last axis; the leading axes are flattened into
/// rows. Binary elementwise kinds broadcast rank <= 2 operands whose dimensions
/// are equal or 1.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    MatMul,
    Add,
    Sub,
    Mul,
    Relu,
    Sin,
    Cos,
    MaxZero,
    Abs,
    Square,
    Sum,
    Mean,
    MinReduce,
    Concat,
    L2Normalize,
    Dot,
    Reciprocal,
    Scale(f64),
    AddScalar(f64),
    Reshape(Vec<usize>),
    SliceCols { start: usize, end: usize },
    GatherRows(Arc<[usize]>),
    RepeatRows(usize),
    PosEncode { levels: usize },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Relu => "relu",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::MaxZero => "max_zero",
            Op::Abs => "abs",
            Op::Square => "square",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::MinReduce => "min_reduce",
            Op::Concat => "concat",
            Op::L2Normalize => "l2_normalize",
            Op::Dot => "dot",
            Op::Reciprocal => "reciprocal",
            Op::Scale(_) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Reshape(_) => "reshape",
            Op::SliceCols { .. } => "slice_cols",
            Op::GatherRows(_) => "gather_rows",
            Op::RepeatRows(_) => "repeat_rows",
            Op::PosEncode { .. } => "pos_encode",
        }
    }
}

enum Aux<T> {
    None,
    Indices(Vec<usize>),
    Values(Vec<T>),
}

struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Option<Op>,
    inputs: Vec<Var>,
    requires_grad: bool,
    aux: Aux<T>,
}

/// Recording of a forward computation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// (rows, cols) view of a shape; leading axes are flattened.
fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape.split_last() {
        None => (1, 1),
        Some((&last, lead)) => (lead.iter().product(), last),
    }
}

/// Shape as a matrix for broadcasting; `None` for rank > 2.
fn as_matrix(shape: &[usize]) -> Option<(usize, usize)> {
    match shape.len() {
        0 => Some((1, 1)),
        1 => Some((1, shape[0])),
        2 => Some((shape[0], shape[1])),
        _ => None,
    }
}

#[derive(Clone, Copy)]
struct Broadcast {
    rows: usize,
    cols: usize,
    a: (usize, usize),
    b: (usize, usize),
}

impl Broadcast {
    /// Row `i` of an operand with dimensions `dims`, expanded to `cols`
    /// entries (through `buf` when the operand is a column).
    #[inline]
    fn row<'a, T: Copy>(dims: (usize, usize), data: &'a [T], i: usize, cols: usize, buf: &'a mut Vec<T>) -> &'a [T] {
        let r = if dims.0 == 1 { 0 } else { i };
        if dims.1 == cols {
            &data[r * cols..(r + 1) * cols]
        } else {
            buf.clear();
            buf.resize(cols, data[r]);
            buf
        }
    }
}

fn sum_f64<T: Scalar>(xs: impl Iterator<Item = T>) -> f64 {
    xs.map(|v| v.widen()).sum()
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Option<Op>, inputs: Vec<Var>, requires_grad: bool, aux: Aux<T>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op, inputs, requires_grad, aux });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf; gradients are tracked when the tensor requires them.
    pub fn leaf(&mut self, tensor: &Tensor<T>) -> Var {
        self.push(tensor.shape().to_vec(), tensor.data().to_vec(), None, Vec::new(), tensor.requires_grad(), Aux::None)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Var, AutodiffError> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(AutodiffError::DataLength { shape, len: data.len() });
        }
        Ok(self.push(shape, data, None, Vec::new(), false, Aux::None))
    }

    pub fn constant_f64(&mut self, shape: impl Into<Vec<usize>>, data: &[f64]) -> Result<Var, AutodiffError> {
        self.constant(shape, data.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Value of a single-element node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0].widen()
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    fn shape_err(&self, op: &Op, inputs: &[Var]) -> AutodiffError {
        AutodiffError::Shape { op: op.name(), shapes: inputs.iter().map(|v| self.nodes[v.0].shape.clone()).collect() }
    }

    fn broadcast(&self, op: &Op, a: Var, b: Var) -> Result<Broadcast, AutodiffError> {
        let sa = &self.nodes[a.0].shape;
        let sb = &self.nodes[b.0].shape;
        if sa == sb {
            let (r, c) = rows_cols(sa);
            return Ok(Broadcast { rows: r, cols: c, a: (r, c), b: (r, c) });
        }
        let (ma, mb) = match (as_matrix(sa), as_matrix(sb)) {
            (Some(ma), Some(mb)) => (ma, mb),
            _ => return Err(self.shape_err(op, &[a, b])),
        };
        let dim = |x: usize, y: usize| -> Option<usize> {
            if x == y || y == 1 {
                Some(x)
            } else if x == 1 {
                Some(y)
            } else {
                None
            }
        };
        match (dim(ma.0, mb.0), dim(ma.1, mb.1)) {
            (Some(rows), Some(cols)) => Ok(Broadcast { rows, cols, a: ma, b: mb }),
            _ => Err(self.shape_err(op, &[a, b])),
        }
    }

    /// Evaluates `op` on `inputs` and records it.
    pub fn apply(&mut self, op: Op, inputs: &[Var]) -> Result<Var, AutodiffError> {
        let arity = match op {
            Op::MatMul | Op::Add | Op::Sub | Op::Mul | Op::Dot => Some(2),
            Op::Concat => None,
            _ => Some(1),
        };
        if let Some(expected) = arity {
            if inputs.len() != expected {
                return Err(AutodiffError::Arity { op: op.name(), expected, got: inputs.len() });
            }
        } else if inputs.is_empty() {
            return Err(AutodiffError::Arity { op: op.name(), expected: 1, got: 0 });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let (shape, value, aux) = self.forward(&op, inputs)?;
        if value.iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite { op: op.name() });
        }
        Ok(self.push(shape, value, Some(op), inputs.to_vec(), requires_grad, aux))
    }

    fn forward(&self, op: &Op, inputs: &[Var]) -> Result<(Vec<usize>, Vec<T>, Aux<T>), AutodiffError> {
        let x = &self.nodes[inputs[0].0];
        let unary = |f: &dyn Fn(T) -> T| (x.shape.clone(), x.value.iter().map(|&v| f(v)).collect::<Vec<T>>(), Aux::None);
        Ok(match op {
            Op::MatMul => {
                let y = &self.nodes[inputs[1].0];
                if x.shape.len() != 2 || y.shape.len() != 2 || x.shape[1] != y.shape[0] {
                    return Err(self.shape_err(op, inputs));
                }
                let (m, k, n) = (x.shape[0], x.shape[1], y.shape[1]);
                let mut out = vec![T::zero(); m * n];
                gemm(m, k, n, MatView::normal(&x.value, k), MatView::normal(&y.value, n), T::zero(), &mut out);
                (vec![m, n], out, Aux::None)
            }
            Op::Add | Op::Sub | Op::Mul => {
                let bc = self.broadcast(op, inputs[0], inputs[1])?;
                let y = &self.nodes[inputs[1].0];
                let shape = if x.shape == y.shape { x.shape.clone() } else { vec![bc.rows, bc.cols] };
                let mut out = vec![T::zero(); bc.rows * bc.cols];
                let (mut ba, mut bb) = (Vec::new(), Vec::new());
                for (i, o) in out.chunks_mut(bc.cols.max(1)).enumerate() {
                    let ra = Broadcast::row(bc.a, &x.value, i, bc.cols, &mut ba);
                    let rb = Broadcast::row(bc.b, &y.value, i, bc.cols, &mut bb);
                    let it = o.iter_mut().zip(ra).zip(rb);
                    match op {
                        Op::Add => it.for_each(|((o, &a), &b)| *o = a + b),
                        Op::Sub => it.for_each(|((o, &a), &b)| *o = a - b),
                        _ => it.for_each(|((o, &a), &b)| *o = a * b),
                    }
                }
                (shape, out, Aux::None)
            }
            Op::Relu | Op::MaxZero => unary(&|v| if v > T::zero() { v } else { T::zero() }),
            Op::Sin => unary(&|v| v.sin()),
            Op::Cos => unary(&|v| v.cos()),
            Op::Abs => unary(&|v| v.abs()),
            Op::Square => unary(&|v| v * v),
            Op::Reciprocal => unary(&|v| T::one() / v),
            Op::Scale(s) => {
                let s = T::lit(*s);
                unary(&|v| v * s)
            }
            Op::AddScalar(s) => {
                let s = T::lit(*s);
                unary(&|v| v + s)
            }
            Op::Sum => (Vec::new(), vec![T::lit(sum_f64(x.value.iter().copied()))], Aux::None),
            Op::Mean => {
                if x.value.is_empty() {
                    return Err(self.shape_err(op, inputs));
                }
                (Vec::new(), vec![T::lit(sum_f64(x.value.iter().copied()) / x.value.len() as f64)], Aux::None)
            }
            Op::MinReduce => {
                let (rows, cols) = rows_cols(&x.shape);
                if cols == 0 {
                    return Err(self.shape_err(op, inputs));
                }
                let mut out = Vec::with_capacity(rows);
                let mut arg = Vec::with_capacity(rows);
                for r in 0..rows {
                    let row = &x.value[r * cols..(r + 1) * cols];
                    let mut best = 0;
                    for (j, &v) in row.iter().enumerate() {
                        if v < row[best] {
                            best = j;
                        }
                    }
                    out.push(row[best]);
                    arg.push(r * cols + best);
                }
                (vec![rows, 1], out, Aux::Indices(arg))
            }
            Op::Concat => {
                let rows = rows_cols(&x.shape).0;
                let mut widths = Vec::with_capacity(inputs.len());
                for v in inputs {
                    let (r, c) = rows_cols(&self.nodes[v.0].shape);
                    if r != rows {
                        return Err(self.shape_err(op, inputs));
                    }
                    widths.push(c);
                }
                let total: usize = widths.iter().sum();
                let mut out = Vec::with_capacity(rows * total);
                for r in 0..rows {
                    for (v, &w) in inputs.iter().zip(&widths) {
                        out.extend_from_slice(&self.nodes[v.0].value[r * w..(r + 1) * w]);
                    }
                }
                (vec![rows, total], out, Aux::None)
            }
            Op::L2Normalize => {
                let (rows, cols) = rows_cols(&x.shape);
                let mut out = Vec::with_capacity(x.value.len());
                let mut norms = Vec::with_capacity(rows);
                for r in 0..rows {
                    let row = &x.value[r * cols..(r + 1) * cols];
                    let norm = sum_f64(row.iter().map(|&v| v * v)).sqrt();
                    norms.push(T::lit(norm));
                    out.extend(row.iter().map(|&v| T::lit(v.widen() / norm)));
                }
                (x.shape.clone(), out, Aux::Values(norms))
            }
            Op::Dot => {
                let y = &self.nodes[inputs[1].0];
                if x.shape != y.shape {
                    return Err(self.shape_err(op, inputs));
                }
                let (rows, cols) = rows_cols(&x.shape);
                let out = (0..rows)
                    .map(|r| {
                        let a = &x.value[r * cols..(r + 1) * cols];
                        let b = &y.value[r * cols..(r + 1) * cols];
                        T::lit(sum_f64(a.iter().zip(b).map(|(&p, &q)| p * q)))
                    })
                    .collect();
                (vec![rows, 1], out, Aux::None)
            }
            Op::Reshape(shape) => {
                if shape.iter().product::<usize>() != x.value.len() {
                    return Err(self.shape_err(op, inputs));
                }
                (shape.clone(), x.value.clone(), Aux::None)
            }
            Op::SliceCols { start, end } => {
                let (rows, cols) = rows_cols(&x.shape);
                if start >= end || *end > cols {
                    return Err(self.shape_err(op, inputs));
                }
                let mut out = Vec::with_capacity(rows * (end - start));
                for r in 0..rows {
                    out.extend_from_slice(&x.value[r * cols + start..r * cols + end]);
                }
                (vec![rows, end - start], out, Aux::None)
            }
            Op::GatherRows(idx) => {
                let (rows, cols) = rows_cols(&x.shape);
                if idx.iter().any(|&i| i >= rows) {
                    return Err(self.shape_err(op, inputs));
                }
                let mut out = Vec::with_capacity(idx.len() * cols);
                for &i in idx.iter() {
                    out.extend_from_slice(&x.value[i * cols..(i + 1) * cols]);
                }
                (vec![idx.len(), cols], out, Aux::None)
            }
            Op::RepeatRows(times) => {
                let (rows, cols) = rows_cols(&x.shape);
                let mut out = Vec::with_capacity(rows * cols * times);
                for r in 0..rows {
                    for _ in 0..*times {
                        out.extend_from_slice(&x.value[r * cols..(r + 1) * cols]);
                    }
                }
                (vec![rows * times, cols], out, Aux::None)
            }
            Op::PosEncode { levels } => {
                let (rows, cols) = rows_cols(&x.shape);
                let width = cols * (1 + 2 * levels);
                let mut out = Vec::with_capacity(rows * width);
                for r in 0..rows {
                    let row = &x.value[r * cols..(r + 1) * cols];
                    out.extend_from_slice(row);
                    for &v in row {
                        let xi = v.widen();
                        for j in 0..*levels {
                            let w = (1u64 << j) as f64 * PI * xi;
                            out.push(T::lit(w.sin()));
                            out.push(T::lit(w.cos()));
                        }
                    }
                }
                (vec![rows, width], out, Aux::None)
            }
        })
    }

    /// Back-propagates from a scalar `loss`, replacing any previous gradients.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        let n = &self.nodes[loss.0];
        if n.value.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(n.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(op) = &node.op else { continue };
            let Some(g) = grads[id].take() else { continue };
            self.backprop(op, node, &g, &mut grads);
            grads[id] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    /// Gradient of the last loss with respect to `v`; zeros when `v` was not
    /// reached, `None` when `v` does not track gradients.
    pub fn grad(&self, v: Var) -> Option<Vec<T>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(match self.grads.get(v.0) {
            Some(Some(g)) => g.clone(),
            _ => vec![T::zero(); node.value.len()],
        })
    }

    fn backprop(&self, op: &Op, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let ins = &node.inputs;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        fn slot<'a, T: Scalar>(grads: &'a mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var) -> &'a mut Vec<T> {
            grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()])
        }
        let x = &self.nodes[ins[0].0];
        macro_rules! unary_grad {
            ($f:expr) => {{
                if wants(ins[0]) {
                    let f = $f;
                    let gx = slot(grads, &self.nodes, ins[0]);
                    for ((acc, &gv), &xv) in gx.iter_mut().zip(g).zip(&x.value) {
                        *acc = *acc + f(gv, xv);
                    }
                }
            }};
        }
        match op {
            Op::MatMul => {
                let y = &self.nodes[ins[1].0];
                let (m, k, n) = (x.shape[0], x.shape[1], y.shape[1]);
                if wants(ins[0]) {
                    let gx = slot(grads, &self.nodes, ins[0]);
                    gemm(m, n, k, MatView::normal(g, n), MatView::transposed(&y.value, n), T::one(), gx);
                }
                if wants(ins[1]) {
                    let gy = slot(grads, &self.nodes, ins[1]);
                    gemm(k, m, n, MatView::transposed(&x.value, k), MatView::normal(g, n), T::one(), gy);
                }
            }
            Op::Add | Op::Sub | Op::Mul => {
                let y = &self.nodes[ins[1].0];
                let bc = self.broadcast(op, ins[0], ins[1]).expect("validated in forward");
                for (side, dims, other, other_dims) in [(0usize, bc.a, y, bc.b), (1, bc.b, x, bc.a)] {
                    if !wants(ins[side]) {
                        continue;
                    }
                    let sign = if matches!(op, Op::Sub) && side == 1 { -T::one() } else { T::one() };
                    let acc = slot(grads, &self.nodes, ins[side]);
                    let cols = bc.cols.max(1);
                    let mut buf = Vec::new();
                    let mut d = vec![T::zero(); cols];
                    for (i, gr) in g.chunks(cols).enumerate() {
                        match op {
                            Op::Mul => {
                                let ro = Broadcast::row(other_dims, &other.value, i, bc.cols, &mut buf);
                                d.iter_mut().zip(gr).zip(ro).for_each(|((d, &gv), &o)| *d = gv * o);
                            }
                            _ => d.iter_mut().zip(gr).for_each(|(d, &gv)| *d = gv * sign),
                        }
                        let r = if dims.0 == 1 { 0 } else { i };
                        if dims.1 == bc.cols {
                            let t = &mut acc[r * bc.cols..(r + 1) * bc.cols];
                            t.iter_mut().zip(&d).for_each(|(t, &dv)| *t = *t + dv);
                        } else {
                            acc[r] = d.iter().fold(acc[r], |a, &dv| a + dv);
                        }
                    }
                }
            }
            Op::Relu | Op::MaxZero => unary_grad!(|gv: T, xv: T| if xv > T::zero() { gv } else { T::zero() }),
            Op::Sin => unary_grad!(|gv: T, xv: T| gv * xv.cos()),
            Op::Cos => unary_grad!(|gv: T, xv: T| -gv * xv.sin()),
            Op::Abs => unary_grad!(|gv: T, xv: T| if xv > T::zero() {
                gv
            } else if xv < T::zero() {
                -gv
            } else {
                T::zero()
            }),
            Op::Square => unary_grad!(|gv: T, xv: T| gv * (xv + xv)),
            Op::Reciprocal => unary_grad!(|gv: T, xv: T| -gv / (xv * xv)),
            Op::Scale(s) => {
                let s = T::lit(*s);
                unary_grad!(|gv: T, _xv: T| gv * s)
            }
            Op::AddScalar(_) | Op::Reshape(_) => unary_grad!(|gv: T, _xv: T| gv),
            Op::Sum | Op::Mean => {
                if wants(ins[0]) {
                    let g0 = match op {
                        Op::Mean => T::lit(g[0].widen() / x.value.len() as f64),
                        _ => g[0],
                    };
                    let gx = slot(grads, &self.nodes, ins[0]);
                    gx.iter_mut().for_each(|acc| *acc = *acc + g0);
                }
            }
            Op::MinReduce => {
                if wants(ins[0]) {
                    let Aux::Indices(arg) = &node.aux else { unreachable!() };
                    let gx = slot(grads, &self.nodes, ins[0]);
                    for (&i, &gv) in arg.iter().zip(g) {
                        gx[i] = gx[i] + gv;
                    }
                }
            }
            Op::Concat => {
                let rows = node.shape[0];
                let total = node.shape[1];
                let mut offset = 0;
                for &v in ins {
                    let w = rows_cols(&self.nodes[v.0].shape).1;
                    if wants(v) {
                        let gv = slot(grads, &self.nodes, v);
                        for r in 0..rows {
                            for c in 0..w {
                                gv[r * w + c] = gv[r * w + c] + g[r * total + offset + c];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::L2Normalize => {
                if wants(ins[0]) {
                    let Aux::Values(norms) = &node.aux else { unreachable!() };
                    let (rows, cols) = rows_cols(&x.shape);
                    let gx = slot(grads, &self.nodes, ins[0]);
                    for r in 0..rows {
                        let y = &node.value[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let proj = sum_f64(y.iter().zip(gr).map(|(&a, &b)| a * b));
                        let inv = 1.0 / norms[r].widen();
                        for c in 0..cols {
                            let d = (gr[c].widen() - y[c].widen() * proj) * inv;
                            gx[r * cols + c] = gx[r * cols + c] + T::lit(d);
                        }
                    }
                }
            }
            Op::Dot => {
                let y = &self.nodes[ins[1].0];
                let (rows, cols) = rows_cols(&x.shape);
                for (side, other) in [(0usize, y), (1, x)] {
                    if !wants(ins[side]) {
                        continue;
                    }
                    let acc = slot(grads, &self.nodes, ins[side]);
                    for r in 0..rows {
                        for c in 0..cols {
                            let i = r * cols + c;
                            acc[i] = acc[i] + g[r] * other.value[i];
                        }
                    }
                }
            }
            Op::SliceCols { start, end } => {
                if wants(ins[0]) {
                    let (rows, cols) = rows_cols(&x.shape);
                    let w = end - start;
                    let gx = slot(grads, &self.nodes, ins[0]);
                    for r in 0..rows {
                        for c in 0..w {
                            let i = r * cols + start + c;
                            gx[i] = gx[i] + g[r * w + c];
                        }
                    }
                }
            }
            Op::GatherRows(idx) => {
                if wants(ins[0]) {
                    let cols = rows_cols(&x.shape).1;
                    let gx = slot(grads, &self.nodes, ins[0]);
                    for (o, &i) in idx.iter().enumerate() {
                        for c in 0..cols {
                            gx[i * cols + c] = gx[i * cols + c] + g[o * cols + c];
                        }
                    }
                }
            }
            Op::RepeatRows(times) => {
                if wants(ins[0]) {
                    let (rows, cols) = rows_cols(&x.shape);
                    let gx = slot(grads, &self.nodes, ins[0]);
                    for r in 0..rows {
                        for t in 0..*times {
                            let o = (r * times + t) * cols;
                            for c in 0..cols {
                                gx[r * cols + c] = gx[r * cols + c] + g[o + c];
                            }
                        }
                    }
                }
            }
            Op::PosEncode { levels } => {
                if wants(ins[0]) {
                    let (rows, cols) = rows_cols(&x.shape);
                    let width = cols * (1 + 2 * levels);
                    let gx = slot(grads, &self.nodes, ins[0]);
                    for r in 0..rows {
                        let go = &g[r * width..(r + 1) * width];
                        for c in 0..cols {
                            let xi = x.value[r * cols + c].widen();
                            let mut d = go[c].widen();
                            for j in 0..*levels {
                                let f = (1u64 << j) as f64 * PI;
                                let base = cols + (c * levels + j) * 2;
                                d += go[base].widen() * f * (f * xi).cos() - go[base + 1].widen() * f * (f * xi).sin();
                            }
                            let i = r * cols + c;
                            gx[i] = gx[i] + T::lit(d);
                        }
                    }
                }
            }
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Mul, &[a, b])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Relu, &[a])
    }

    pub fn sin(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Sin, &[a])
    }

    pub fn cos(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Cos, &[a])
    }

    pub fn max_zero(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::MaxZero, &[a])
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Abs, &[a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Square, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Mean, &[a])
    }

    pub fn min_reduce(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::MinReduce, &[a])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        self.apply(Op::Concat, parts)
    }

    pub fn l2_normalize(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::L2Normalize, &[a])
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Dot, &[a, b])
    }

    pub fn reciprocal(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(Op::Reciprocal, &[a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, AutodiffError> {
        self.apply(Op::Scale(s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var, AutodiffError> {
        self.apply(Op::AddScalar(s), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var, AutodiffError> {
        self.apply(Op::Reshape(shape.into()), &[a])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        self.apply(Op::SliceCols { start, end }, &[a])
    }

    pub fn gather_rows(&mut self, a: Var, idx: Arc<[usize]>) -> Result<Var, AutodiffError> {
        self.apply(Op::GatherRows(idx), &[a])
    }

    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Result<Var, AutodiffError> {
        self.apply(Op::RepeatRows(times), &[a])
    }

    pub fn pos_encode(&mut self, a: Var, levels: usize) -> Result<Var, AutodiffError> {
        self.apply(Op::PosEncode { levels }, &[a])
    }
}
