use crate::error::{Error, Result};
use crate::grad::kernels;
use crate::grad::Tensor;

/// Handle to a value recorded on a [`Tape`].
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
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    LogAddExp(Var, Var),
    LogSoftmax(Var),
    Sum(Var),
    Reshape(Var),
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Gather { x: Var, index: Vec<Option<usize>> },
    GatherRows { x: Var, index: Vec<Option<usize>> },
    PairwiseAdd(Var, Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of executed primitives. Reverse traversal yields exact
/// gradients of any scalar node with respect to every leaf that requires them.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Leaf adjoints produced by one backward sweep. Intermediate adjoints
/// are released as soon as they have been propagated.
#[derive(Clone, Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
    shapes: Vec<Option<Vec<usize>>>,
}

impl Gradients {
    /// Gradient of the root with respect to leaf `var`; `None` when no path
    /// exists or `var` is not a leaf.
    pub fn get(&self, var: Var) -> Option<Tensor> {
        let shape = self.shapes[var.0].as_ref()?;
        self.adjoints[var.0].as_ref().map(|g| Tensor::from_parts(shape.clone(), g.clone()))
    }

    pub fn raw(&self, var: Var) -> Option<&[f64]> {
        self.adjoints[var.0].as_deref()
    }

    /// Adds the gradient for `var` into `into`. No-op when unreachable.
    pub fn accumulate(&self, var: Var, into: &mut Tensor) -> Result<()> {
        if let Some(g) = &self.adjoints[var.0] {
            if g.len() != into.len() {
                return Err(Error::ShapeMismatch {
                    op: "accumulate",
                    detail: format!("{} vs {}", g.len(), into.len()),
                });
            }
            for (a, b) in into.values_mut().iter_mut().zip(g) {
                *a += b;
            }
        }
        Ok(())
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch { op, detail: format!("{a:?} vs {b:?}") }
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// Records a leaf whose gradient is wanted (parameters, probed inputs).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: &'static str, value: Tensor, record: Op, inputs: &[Var]) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(value, record, requires_grad))
    }

    fn matrix_dims(&self, var: Var) -> Option<(usize, usize)> {
        match self.shape(var) {
            [r, c] => Some((*r, *c)),
            _ => None,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a).ok_or_else(|| mismatch("matmul", self.shape(a), self.shape(b)))?;
        let (k2, n) = self.matrix_dims(b).ok_or_else(|| mismatch("matmul", self.shape(a), self.shape(b)))?;
        if k != k2 {
            return Err(mismatch("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_into(self.value(a).values(), self.value(b).values(), &mut out, m, k, n);
        self.push("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b])
    }

    fn binary_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Vec<usize>> {
        let (sa, sb) = (self.value(a), self.value(b));
        if sa.shape() == sb.shape() || sb.is_scalar() {
            Ok(sa.shape().to_vec())
        } else if sa.is_scalar() {
            Ok(sb.shape().to_vec())
        } else {
            Err(mismatch(op, sa.shape(), sb.shape()))
        }
    }

    fn binary_values(&self, a: Var, b: Var, n: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (va, vb) = (self.value(a).values(), self.value(b).values());
        let pick = |v: &[f64], i: usize| if v.len() == 1 { v[0] } else { v[i] };
        (0..n).map(|i| f(pick(va, i), pick(vb, i))).collect()
    }

    /// Equal-shape or scalar-with-tensor addition.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.binary_shape("add", a, b)?;
        let n = shape.iter().product();
        let out = self.binary_values(a, b, n, |x, y| x + y);
        self.push("add", Tensor::from_parts(shape, out), Op::Add(a, b), &[a, b])
    }

    /// Equal-shape or scalar-with-tensor product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.binary_shape("mul", a, b)?;
        let n = shape.iter().product();
        let out = self.binary_values(a, b, n, |x, y| x * y);
        self.push("mul", Tensor::from_parts(shape, out), Op::Mul(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let neg = self.scale(b, -1.0)?;
        self.add(a, neg)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let out = self.value(x).map(|v| v * factor);
        self.push("scale", out, Op::Scale(x, factor), &[x])
    }

    /// Adds a length-`n` vector to every row of an `[m × n]` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (vx, vr) = (self.value(x), self.value(row));
        if vr.len() != vx.cols() {
            return Err(mismatch("add_row", vx.shape(), vr.shape()));
        }
        let n = vr.len();
        let r = vr.values();
        let out: Vec<f64> = vx.values().iter().enumerate().map(|(i, v)| v + r[i % n]).collect();
        let shape = vx.shape().to_vec();
        self.push("add_row", Tensor::from_parts(shape, out), Op::AddRow(x, row), &[x, row])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(kernels::sigmoid);
        self.push("sigmoid", out, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(f64::tanh);
        self.push("tanh", out, Op::Tanh(x), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(f64::exp);
        self.push("exp", out, Op::Exp(x), &[x])
    }

    /// Stable `ln(e^a + e^b)` for equal-shape or scalar-with-tensor inputs.
    pub fn log_add_exp(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.binary_shape("log_add_exp", a, b)?;
        let n = shape.iter().product();
        let out = self.binary_values(a, b, n, kernels::log_add_exp);
        self.push("log_add_exp", Tensor::from_parts(shape, out), Op::LogAddExp(a, b), &[a, b])
    }

    /// Log-softmax over the final axis, stabilized by max subtraction.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let cols = v.cols();
        let mut out = v.values().to_vec();
        for row in out.chunks_mut(cols) {
            kernels::log_softmax_in_place(row);
        }
        let shape = v.shape().to_vec();
        self.push("log_softmax", Tensor::from_parts(shape, out), Op::LogSoftmax(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x);
        if shape.iter().product::<usize>() != v.len() || shape.contains(&0) {
            return Err(mismatch("reshape", v.shape(), shape));
        }
        let out = Tensor::from_parts(shape.to_vec(), v.values().to_vec());
        self.push("reshape", out, Op::Reshape(x), &[x])
    }

    /// Rows `[start, end)` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(x);
        let (rows, cols) = (v.rows(), v.cols());
        if start >= end || end > rows {
            return Err(Error::InvalidArgument(format!("slice_rows {start}..{end} of {rows}")));
        }
        let out = Tensor::from_parts(vec![end - start, cols], v.values()[start * cols..end * cols].to_vec());
        self.push("slice_rows", out, Op::SliceRows { x, start }, &[x])
    }

    /// Columns `[start, end)` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(x);
        let (rows, cols) = (v.rows(), v.cols());
        if start >= end || end > cols {
            return Err(Error::InvalidArgument(format!("slice_cols {start}..{end} of {cols}")));
        }
        let width = end - start;
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&v.values()[r * cols + start..r * cols + end]);
        }
        self.push("slice_cols", Tensor::from_parts(vec![rows, width], out), Op::SliceCols { x, start }, &[x])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat_rows input"))?;
        let cols = self.value(first).cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(mismatch("concat_rows", self.shape(first), v.shape()));
            }
            rows += v.rows();
            out.extend_from_slice(v.values());
        }
        self.push("concat_rows", Tensor::from_parts(vec![rows, cols], out), Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat_cols input"))?;
        let rows = self.value(first).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::ShapeMismatch { op: "concat_cols", detail: "row counts differ".into() });
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        self.push("concat_cols", Tensor::from_parts(vec![rows, total], out), Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Picks flat elements of `x` into a vector; `None` entries take `fill`
    /// and carry no gradient.
    pub fn gather(&mut self, x: Var, index: Vec<Option<usize>>, fill: f64) -> Result<Var> {
        let v = self.value(x);
        if index.is_empty() {
            return Err(Error::Empty("gather index"));
        }
        let mut out = Vec::with_capacity(index.len());
        for i in &index {
            match *i {
                Some(i) if i < v.len() => out.push(v.values()[i]),
                Some(i) => return Err(Error::InvalidArgument(format!("gather index {i} out of {}", v.len()))),
                None => out.push(fill),
            }
        }
        let n = out.len();
        self.push("gather", Tensor::from_parts(vec![n], out), Op::Gather { x, index }, &[x])
    }

    /// Picks rows of a matrix (embedding lookup); `None` yields a zero row.
    pub fn gather_rows(&mut self, x: Var, index: Vec<Option<usize>>) -> Result<Var> {
        let v = self.value(x);
        let (rows, cols) = (v.rows(), v.cols());
        if index.is_empty() {
            return Err(Error::Empty("gather_rows index"));
        }
        let mut out = Vec::with_capacity(index.len() * cols);
        for i in &index {
            match *i {
                Some(i) if i < rows => out.extend_from_slice(v.row(i)),
                Some(i) => return Err(Error::InvalidArgument(format!("row {i} out of {rows}"))),
                None => out.extend(std::iter::repeat(0.0).take(cols)),
            }
        }
        let n = index.len();
        self.push("gather_rows", Tensor::from_parts(vec![n, cols], out), Op::GatherRows { x, index }, &[x])
    }

    /// For `a: [T × J]`, `b: [U × J]` returns `[(T·U) × J]` whose row
    /// `t·U + u` is `a_t + b_u`.
    pub fn pairwise_add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() || va.shape().len() != 2 || vb.shape().len() != 2 {
            return Err(mismatch("pairwise_add", va.shape(), vb.shape()));
        }
        let (t, u, j) = (va.rows(), vb.rows(), va.cols());
        let mut out = Vec::with_capacity(t * u * j);
        for ti in 0..t {
            let ra = va.row(ti);
            for ui in 0..u {
                out.extend(ra.iter().zip(vb.row(ui)).map(|(x, y)| x + y));
            }
        }
        self.push("pairwise_add", Tensor::from_parts(vec![t * u, j], out), Op::PairwiseAdd(a, b), &[a, b])
    }

    /// Reverse sweep from a scalar root. Visits nodes in exact reverse
    /// execution order with additive accumulation.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = self.value(root);
        if !root_value.is_scalar() {
            return Err(Error::NotScalar(root_value.shape().to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                adj[i] = None;
                continue;
            }
            let g = match adj[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(node, &g, &mut adj);
            if matches!(node.op, Op::Leaf) {
                adj[i] = Some(g);
            }
        }
        adj.resize(self.nodes.len(), None);
        let shapes = self.nodes.iter().map(|n| matches!(n.op, Op::Leaf).then(|| n.value.shape().to_vec())).collect();
        Ok(Gradients { adjoints: adj, shapes })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let y = node.value.values();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.matrix_dims(*a).expect("matmul lhs");
                let n = self.value(*b).cols();
                if self.wants(*a) {
                    let da = slot(adj, *a, m * k);
                    kernels::matmul_bt_acc(g, self.value(*b).values(), da, m, n, k);
                }
                if self.wants(*b) {
                    let db = slot(adj, *b, k * n);
                    kernels::matmul_at_acc(self.value(*a).values(), g, db, m, k, n);
                }
            }
            Op::Add(a, b) => {
                for &x in [a, b] {
                    if self.wants(x) {
                        let len = self.value(x).len();
                        let dx = slot(adj, x, len);
                        reduce_into(dx, g, |_| 1.0);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).values(), self.value(*b).values());
                let pick = |v: &[f64], i: usize| if v.len() == 1 { v[0] } else { v[i] };
                if self.wants(*a) {
                    let dx = slot(adj, *a, va.len());
                    reduce_into(dx, g, |i| pick(vb, i));
                }
                if self.wants(*b) {
                    let dx = slot(adj, *b, vb.len());
                    reduce_into(dx, g, |i| pick(va, i));
                }
            }
            Op::Scale(x, f) => {
                let dx = slot(adj, *x, g.len());
                for (d, gi) in dx.iter_mut().zip(g) {
                    *d += gi * f;
                }
            }
            Op::AddRow(x, row) => {
                if self.wants(*x) {
                    let dx = slot(adj, *x, g.len());
                    for (d, gi) in dx.iter_mut().zip(g) {
                        *d += gi;
                    }
                }
                if self.wants(*row) {
                    let n = self.value(*row).len();
                    let dr = slot(adj, *row, n);
                    for chunk in g.chunks(n) {
                        for (d, gi) in dr.iter_mut().zip(chunk) {
                            *d += gi;
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                let dx = slot(adj, *x, g.len());
                for ((d, gi), yi) in dx.iter_mut().zip(g).zip(y) {
                    *d += gi * yi * (1.0 - yi);
                }
            }
            Op::Tanh(x) => {
                let dx = slot(adj, *x, g.len());
                for ((d, gi), yi) in dx.iter_mut().zip(g).zip(y) {
                    *d += gi * (1.0 - yi * yi);
                }
            }
            Op::Exp(x) => {
                let dx = slot(adj, *x, g.len());
                for ((d, gi), yi) in dx.iter_mut().zip(g).zip(y) {
                    *d += gi * yi;
                }
            }
            Op::LogAddExp(a, b) => {
                for &x in [a, b] {
                    if self.wants(x) {
                        let vx = self.value(x).values();
                        let pick = |i: usize| if vx.len() == 1 { vx[0] } else { vx[i] };
                        let dx = slot(adj, x, vx.len());
                        reduce_into(dx, g, |i| (pick(i) - y[i]).exp());
                    }
                }
            }
            Op::LogSoftmax(x) => {
                let cols = node.value.cols();
                let dx = slot(adj, *x, g.len());
                for ((dr, gr), yr) in dx.chunks_mut(cols).zip(g.chunks(cols)).zip(y.chunks(cols)) {
                    let total: f64 = gr.iter().sum();
                    for ((d, gi), yi) in dr.iter_mut().zip(gr).zip(yr) {
                        *d += gi - yi.exp() * total;
                    }
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                let dx = slot(adj, *x, n);
                for d in dx.iter_mut() {
                    *d += g[0];
                }
            }
            Op::Reshape(x) => {
                let dx = slot(adj, *x, g.len());
                for (d, gi) in dx.iter_mut().zip(g) {
                    *d += gi;
                }
            }
            Op::SliceRows { x, start } => {
                let v = self.value(*x);
                let cols = v.cols();
                let dx = slot(adj, *x, v.len());
                for (d, gi) in dx[start * cols..].iter_mut().zip(g) {
                    *d += gi;
                }
            }
            Op::SliceCols { x, start } => {
                let v = self.value(*x);
                let (cols, width) = (v.cols(), node.value.cols());
                let dx = slot(adj, *x, v.len());
                for (r, gr) in g.chunks(width).enumerate() {
                    let base = r * cols + start;
                    for (d, gi) in dx[base..base + width].iter_mut().zip(gr) {
                        *d += gi;
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.wants(p) {
                        let dx = slot(adj, p, n);
                        for (d, gi) in dx.iter_mut().zip(&g[offset..offset + n]) {
                            *d += gi;
                        }
                    }
                    offset += n;
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let v = self.value(p);
                    let w = v.cols();
                    if self.wants(p) {
                        let dx = slot(adj, p, v.len());
                        for (r, dr) in dx.chunks_mut(w).enumerate() {
                            let base = r * total + offset;
                            for (d, gi) in dr.iter_mut().zip(&g[base..base + w]) {
                                *d += gi;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Gather { x, index } => {
                let n = self.value(*x).len();
                let dx = slot(adj, *x, n);
                for (i, gi) in index.iter().zip(g) {
                    if let Some(i) = i {
                        dx[*i] += gi;
                    }
                }
            }
            Op::GatherRows { x, index } => {
                let v = self.value(*x);
                let cols = v.cols();
                let dx = slot(adj, *x, v.len());
                for (i, gr) in index.iter().zip(g.chunks(cols)) {
                    if let Some(i) = i {
                        for (d, gi) in dx[i * cols..(i + 1) * cols].iter_mut().zip(gr) {
                            *d += gi;
                        }
                    }
                }
            }
            Op::PairwiseAdd(a, b) => {
                let (t, u, j) = (self.value(*a).rows(), self.value(*b).rows(), node.value.cols());
                if self.wants(*a) {
                    let da = slot(adj, *a, t * j);
                    for ti in 0..t {
                        for ui in 0..u {
                            let src = &g[(ti * u + ui) * j..(ti * u + ui + 1) * j];
                            for (d, gi) in da[ti * j..(ti + 1) * j].iter_mut().zip(src) {
                                *d += gi;
                            }
                        }
                    }
                }
                if self.wants(*b) {
                    let db = slot(adj, *b, u * j);
                    for ti in 0..t {
                        for ui in 0..u {
                            let src = &g[(ti * u + ui) * j..(ti * u + ui + 1) * j];
                            for (d, gi) in db[ui * j..(ui + 1) * j].iter_mut().zip(src) {
                                *d += gi;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn slot(adj: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    adj[v.0].get_or_insert_with(|| vec![0.0; len])
}

/// Accumulates `g[i] * local(i)` into `dx`, summing when `dx` is a
/// broadcast scalar.
fn reduce_into(dx: &mut [f64], g: &[f64], local: impl Fn(usize) -> f64) {
    if dx.len() == g.len() {
        for (i, (d, gi)) in dx.iter_mut().zip(g).enumerate() {
            *d += gi * local(i);
        }
    } else {
        let mut acc = 0.0;
        for (i, gi) in g.iter().enumerate() {
            acc += gi * local(i);
        }
        dx[0] += acc;
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::grad::check::check_gradient;

    fn grad_of(tape: &Tape, root: Var, leaf: Var) -> Vec<f64> {
        tape.backward(root).unwrap().raw(leaf).unwrap().to_vec()
    }

    #[test]
    fn matmul_hand_examples() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let ones = t.constant(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
        let id = t.constant(Tensor::identity(2));
        let c = t.matmul(a, ones).unwrap();
        assert_eq!(t.value(c).values(), &[3.0, 7.0]);
        let same = t.matmul(a, id).unwrap();
        assert_eq!(t.value(same), t.value(a));
        assert!(matches!(t.matmul(a, c).and_then(|x| t.matmul(c, x)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn elementwise_fixed_points() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(0.0));
        let s = t.sigmoid(x).unwrap();
        assert_eq!(t.value(s).item(), 0.5);
        let th = t.tanh(x).unwrap();
        assert_eq!(grad_of(&t, th, x), vec![1.0]);
        let wide = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        let narrow = t.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert!(t.add(wide, narrow).is_err());
        let scaled = t.mul(x, narrow).unwrap();
        assert_eq!(t.shape(scaled), &[3]);
    }

    #[test]
    fn log_softmax_is_stable() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![0.0, 0.0]));
        let y = t.log_softmax(x).unwrap();
        assert!(t.value(y).values().iter().all(|&v| (v + 2f64.ln()).abs() < 1e-15));
        let x = t.leaf(Tensor::vector(vec![1000.0, 0.0]));
        let y = t.log_softmax(x).unwrap();
        assert!(t.value(y).values()[0].abs() < 1e-300);
        assert!((t.value(y).values()[1] + 1000.0).abs() < 1e-12);
    }

    #[test]
    fn overflow_is_an_error() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 800.0]));
        assert!(matches!(t.exp(x), Err(Error::NonFinite { .. })));
        assert!(matches!(t.scale(x, 1e307), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn backward_of_sum_and_half_square() {
        let theta = Tensor::vector(vec![0.5, -1.5, 2.0]);
        let mut t = Tape::new();
        let x = t.leaf(theta.clone());
        let s = t.sum(x).unwrap();
        assert_eq!(grad_of(&t, s, x), vec![1.0; 3]);
        let sq = t.mul(x, x).unwrap();
        let sq = t.sum(sq).unwrap();
        let half = t.scale(sq, 0.5).unwrap();
        assert_eq!(grad_of(&t, half, x), theta.values());
        assert!(matches!(t.backward(x), Err(Error::NotScalar(_))));
    }

    #[test]
    fn repeated_backward_accumulates_exactly() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![0.3, -0.7, 1.1]));
        let y = t.tanh(x).unwrap();
        let z = t.mul(y, x).unwrap();
        let root = t.sum(z).unwrap();
        let mut acc = Tensor::zeros(&[3]);
        let once = t.backward(root).unwrap();
        once.accumulate(x, &mut acc).unwrap();
        let single = acc.clone();
        t.backward(root).unwrap().accumulate(x, &mut acc).unwrap();
        assert!(acc.values().iter().zip(single.values()).all(|(a, s)| *a == 2.0 * s));
    }

    #[test]
    fn identical_programs_are_bit_identical() {
        let run = || {
            let mut t = Tape::new();
            let a = t.leaf(Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6]).unwrap());
            let b = t.leaf(Tensor::matrix(3, 2, vec![1.0, 0.5, -0.25, 2.0, 0.75, -1.0]).unwrap());
            let c = t.matmul(a, b).unwrap();
            let c = t.log_softmax(c).unwrap();
            let root = t.sum(c).unwrap();
            let g = t.backward(root).unwrap();
            (t.value(root).item().to_bits(), g.raw(a).unwrap().to_vec(), g.raw(b).unwrap().to_vec())
        };
        assert_eq!(run(), run());
    }

    fn unary(t: &mut Tape, x: Var, op: u8) -> Result<Var> {
        match op {
            0 => t.sigmoid(x),
            1 => t.tanh(x),
            2 => t.exp(x),
            3 => t.log_softmax(x),
            4 => t.mul(x, x),
            _ => {
                let w = t.reshape(x, &[4, 3])?;
                t.matmul(x, w)
            }
        }
    }

    proptest! {
        #[test]
        fn primitive_gradients_match_central_differences(
            values in prop::collection::vec(-2.0f64..2.0, 12),
            weights in prop::collection::vec(-2.0f64..2.0, 12),
            op in 0u8..6,
        ) {
            let x = Tensor::matrix(3, 4, values).unwrap();
            let check = check_gradient(&[x], 1e-6, |t, v| {
                let y = unary(t, v[0], op)?;
                let n = t.value(y).len();
                let w = t.constant(Tensor::new(t.shape(y).to_vec(), weights[..n].to_vec())?);
                let weighted = t.mul(y, w)?;
                t.sum(weighted)
            })
            .unwrap();
            prop_assert!(check.rel_error() < 1e-5, "op {op}: {:e}", check.rel_error());
        }
    }
}
