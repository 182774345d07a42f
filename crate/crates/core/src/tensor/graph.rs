use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Mul,
    Tanh,
    Sigmoid,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Relu(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Transpose(Var),
    Reshape(Var),
    SliceCols { src: Var, start: usize },
    Row { src: Var, index: usize },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    GatherRows { table: Var, indices: Vec<usize> },
    MaxPoolRows { src: Var, argmax: Vec<usize> },
    Sum(Var),
    Cosine { a: Var, b: Var },
    Softmax(Var),
    AddRowBroadcast(Var, Var),
    Unfold { src: Var, window: usize },
}

struct Node<'p> {
    op: Op,
    shape: Vec<usize>,
    value: Cow<'p, [f64]>,
}

/// Parameter gradients produced by one backward pass.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.by_param.get(&id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.by_param.iter().map(|(&id, g)| (id, g.as_slice()))
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}

/// A single-use computation tape.
///
/// Nodes are appended in evaluation order, so creation order is a valid
/// topological order. Parameters are borrowed from their store rather than
/// copied.
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    params: HashMap<ParamId, Var>,
    backward_done: bool,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

/// Interprets a shape as a matrix; vectors are single rows.
fn as_matrix(shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [n] => Ok((1, *n)),
        [r, c] => Ok((*r, *c)),
        _ => Err(Error::Shape(format!("expected a vector or matrix, got {shape:?}"))),
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn acc<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node<'_>], v: Var) -> &'g mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()])
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            op,
            shape,
            value: Cow::Owned(value),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// The value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec())
            .expect("graph nodes hold consistent shapes")
    }

    /// A constant leaf.
    pub fn input(&mut self, t: Tensor) -> Var {
        let Tensor { shape, values, .. } = t;
        self.push(Op::Input, shape, values)
    }

    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var> {
        Ok(self.input(Tensor::new(shape, values)?))
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> Result<Var> {
        Ok(self.input(Tensor::zeros(shape)?))
    }

    /// A trainable leaf borrowed from `store`. Repeated calls for the same
    /// parameter return the same node.
    pub fn param(&mut self, store: &'p ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let t = store.tensor(id);
        self.nodes.push(Node {
            op: Op::Param(id),
            shape: t.shape().to_vec(),
            value: Cow::Borrowed(t.values()),
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k, k2, n) = match (sa, sb) {
            ([m, k], [k2, n]) => (*m, *k, *k2, *n),
            _ => {
                return Err(Error::Shape(format!(
                    "matmul needs matrices, got {sa:?} and {sb:?}"
                )))
            }
        };
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner dimensions differ: {m}x{k} by {k2}x{n}"
            )));
        }
        let out = matmul_raw(self.value(a), self.value(b), m, k, n);
        Ok(self.push(Op::MatMul(a, b), vec![m, n], out))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(op, shape, out))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(op, shape, out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x + s, Op::AddScalar(a))
    }

    /// Pointwise operation dispatch; binary kinds require `b`.
    pub fn elementwise(&mut self, kind: ElementwiseKind, a: Var, b: Option<Var>) -> Result<Var> {
        match (kind, b) {
            (ElementwiseKind::Add, Some(b)) => self.add(a, b),
            (ElementwiseKind::Mul, Some(b)) => self.mul(a, b),
            (ElementwiseKind::Tanh, None) => Ok(self.tanh(a)),
            (ElementwiseKind::Sigmoid, None) => Ok(self.sigmoid(a)),
            (kind, _) => Err(Error::Usage(format!("wrong operand count for {kind:?}"))),
        }
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = as_matrix(self.shape(a))?;
        let src = self.value(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        Ok(self.push(Op::Transpose(a), vec![c, r], out))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).len() || shape.contains(&0) {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape(a)
            )));
        }
        let out = self.value(a).to_vec();
        Ok(self.push(Op::Reshape(a), shape, out))
    }

    /// Columns `start..start+len` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = as_matrix(self.shape(a))?;
        if len == 0 || start + len > c {
            return Err(Error::Shape(format!("column slice {start}+{len} out of {c}")));
        }
        let src = self.value(a);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        Ok(self.push(Op::SliceCols { src: a, start }, vec![r, len], out))
    }

    /// Row `index` as a `1×c` matrix.
    pub fn row(&mut self, a: Var, index: usize) -> Result<Var> {
        let (r, c) = as_matrix(self.shape(a))?;
        if index >= r {
            return Err(Error::Shape(format!("row {index} out of {r}")));
        }
        let out = self.value(a)[index * c..(index + 1) * c].to_vec();
        Ok(self.push(Op::Row { src: a, index }, vec![1, c], out))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let (_, c) = as_matrix(self.shape(*first))?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, pc) = as_matrix(self.shape(p))?;
            if pc != c {
                return Err(Error::Shape(format!("concat_rows: {pc} columns vs {c}")));
            }
            rows += r;
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(Op::ConcatRows(parts.to_vec()), vec![rows, c], out))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let (r, _) = as_matrix(self.shape(*first))?;
        let mut dims = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = as_matrix(self.shape(p))?;
            if pr != r {
                return Err(Error::Shape(format!("concat_cols: {pr} rows vs {r}")));
            }
            dims.push(pc);
        }
        let total: usize = dims.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &pc) in parts.iter().zip(&dims) {
                out.extend_from_slice(&self.value(p)[i * pc..(i + 1) * pc]);
            }
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), vec![r, total], out))
    }

    /// Looks up rows of an embedding table.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (r, c) = as_matrix(self.shape(table))?;
        if indices.is_empty() {
            return Err(Error::Domain("gather of zero rows".into()));
        }
        let src = self.value(table);
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(Error::Shape(format!("row index {i} out of {r}")));
            }
            out.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        Ok(self.push(
            Op::GatherRows {
                table,
                indices: indices.to_vec(),
            },
            vec![indices.len(), c],
            out,
        ))
    }

    /// Per-column maximum over rows; ties route gradient to the first row.
    pub fn max_pool_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = as_matrix(self.shape(a))?;
        if r == 0 {
            return Err(Error::Domain("max-pool over an empty sequence".into()));
        }
        let src = self.value(a);
        let mut argmax = vec![0usize; c];
        let mut out = src[..c].to_vec();
        for i in 1..r {
            for j in 0..c {
                let v = src[i * c + j];
                if v > out[j] {
                    out[j] = v;
                    argmax[j] = i;
                }
            }
        }
        Ok(self.push(Op::MaxPoolRows { src: a, argmax }, vec![c], out))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(Op::Sum(a), vec![1], vec![s])
    }

    /// Cosine similarity. Zero-norm operands are a domain error.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.len() != vb.len() {
            return Err(Error::Shape(format!(
                "cosine of lengths {} and {}",
                va.len(),
                vb.len()
            )));
        }
        let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
        let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return Err(Error::Domain("cosine of a zero-norm vector".into()));
        }
        let c = dot / (na * nb);
        Ok(self.push(Op::Cosine { a, b }, vec![1], vec![c]))
    }

    /// Softmax over all elements, with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        if src.is_empty() {
            return Err(Error::Domain("softmax of nothing".into()));
        }
        let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = src.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let out = exps.into_iter().map(|e| e / z).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::Softmax(a), shape, out))
    }

    /// Adds a length-`c` vector to every row of an `r×c` matrix.
    pub fn add_row_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = as_matrix(self.shape(a))?;
        if self.value(b).len() != c {
            return Err(Error::Shape(format!(
                "broadcast of {} values over {c} columns",
                self.value(b).len()
            )));
        }
        let (src, bias) = (self.value(a), self.value(b));
        let mut out = src.to_vec();
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] += bias[j];
            }
        }
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::AddRowBroadcast(a, b), shape, out))
    }

    /// Sliding windows of `window` rows (odd), zero padded at both ends:
    /// row `t` of the output is rows `t-p ..= t+p` of the input laid end to
    /// end, where `p = (window-1)/2`.
    pub fn unfold(&mut self, a: Var, window: usize) -> Result<Var> {
        if window.is_multiple_of(2) {
            return Err(Error::Config(format!("window {window} must be odd")));
        }
        let (r, c) = as_matrix(self.shape(a))?;
        let pad = (window - 1) / 2;
        let src = self.value(a);
        let mut out = vec![0.0; r * window * c];
        for t in 0..r {
            for k in 0..window {
                let s = t + k;
                if s < pad || s - pad >= r {
                    continue;
                }
                let s = s - pad;
                let dst = t * window * c + k * c;
                out[dst..dst + c].copy_from_slice(&src[s * c..(s + 1) * c]);
            }
        }
        Ok(self.push(Op::Unfold { src: a, window }, vec![r, window * c], out))
    }

    /// Reverse pass from a scalar `loss`. A graph supports exactly one
    /// backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::Usage("backward already ran on this graph".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "loss must be scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let y: &[f64] = &node.value;
            let nodes = &self.nodes;
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    out.by_param.insert(*id, dy);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = as_matrix(&nodes[a.0].shape)?;
                    let (_, n) = as_matrix(&nodes[b.0].shape)?;
                    let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let ga = acc(&mut grads, nodes, *a);
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += dy[i * n + j] * vb[p * n + j];
                            }
                            ga[i * k + p] += s;
                        }
                    }
                    let gb = acc(&mut grads, nodes, *b);
                    for i in 0..m {
                        for p in 0..k {
                            let av = va[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                gb[p * n + j] += av * dy[i * n + j];
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for (g, d) in acc(&mut grads, nodes, *a).iter_mut().zip(&dy) {
                        *g += d;
                    }
                    for (g, d) in acc(&mut grads, nodes, *b).iter_mut().zip(&dy) {
                        *g += d;
                    }
                }
                Op::Sub(a, b) => {
                    for (g, d) in acc(&mut grads, nodes, *a).iter_mut().zip(&dy) {
                        *g += d;
                    }
                    for (g, d) in acc(&mut grads, nodes, *b).iter_mut().zip(&dy) {
                        *g -= d;
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                    for ((g, d), x) in acc(&mut grads, nodes, *a).iter_mut().zip(&dy).zip(vb.iter()) {
                        *g += d * x;
                    }
                    for ((g, d), x) in acc(&mut grads, nodes, *b).iter_mut().zip(&dy).zip(va.iter()) {
                        *g += d * x;
                    }
                }
                Op::Div(a, b) => {
                    let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                    for ((g, d), x) in acc(&mut grads, nodes, *a).iter_mut().zip(&dy).zip(vb.iter()) {
                        *g += d / x;
                    }
                    let gb = acc(&mut grads, nodes, *b);
                    for i in 0..dy.len() {
                        gb[i] -= dy[i] * va[i] / (vb[i] * vb[i]);
                    }
                }
                Op::Tanh(a) => {
                    for ((g, d), t) in acc(&mut grads, nodes, *a).iter_mut().zip(&dy).zip(y) {
                        *g += d * (1.0 - t * t);
                    }
                }
                Op::Sigmoid(a) => {
                    for ((g, d), s) in acc(&mut grads, nodes, *a).iter_mut().zip(&dy).zip(y) {
                        *g += d * s * (1.0 - s);
                    }
                }
                Op::Exp(a) => {
                    for ((g, d), e) in acc(&mut grads, nodes, *a).iter_mut().zip(&dy).zip(y) {
                        *g += d * e;
                    }
                }
                Op::Relu(a) => {
                    let va = &nodes[a.0].value;
                    for ((g, d), x) in acc(&mut grads, nodes, *a).iter_mut().zip(&dy).zip(va.iter()) {
                        if *x > 0.0 {
                            *g += d;
                        }
                    }
                }
                Op::Scale(a, s) => {
                    for (g, d) in acc(&mut grads, nodes, *a).iter_mut().zip(&dy) {
                        *g += d * s;
                    }
                }
                Op::AddScalar(a) | Op::Reshape(a) => {
                    for (g, d) in acc(&mut grads, nodes, *a).iter_mut().zip(&dy) {
                        *g += d;
                    }
                }
                Op::Transpose(a) => {
                    let (r, c) = as_matrix(&nodes[a.0].shape)?;
                    let ga = acc(&mut grads, nodes, *a);
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += dy[j * r + i];
                        }
                    }
                }
                Op::SliceCols { src, start } => {
                    let (r, c) = as_matrix(&nodes[src.0].shape)?;
                    let len = node.shape[1];
                    let ga = acc(&mut grads, nodes, *src);
                    for i in 0..r {
                        for j in 0..len {
                            ga[i * c + start + j] += dy[i * len + j];
                        }
                    }
                }
                Op::Row { src, index } => {
                    let c = dy.len();
                    let ga = acc(&mut grads, nodes, *src);
                    for j in 0..c {
                        ga[index * c + j] += dy[j];
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = nodes[p.0].value.len();
                        for (g, d) in acc(&mut grads, nodes, *p).iter_mut().zip(&dy[offset..offset + len]) {
                            *g += d;
                        }
                        offset += len;
                    }
                }
                Op::ConcatCols(parts) => {
                    let (r, total) = (node.shape[0], node.shape[1]);
                    let mut col = 0;
                    for p in parts {
                        let (_, pc) = as_matrix(&nodes[p.0].shape)?;
                        let gp = acc(&mut grads, nodes, *p);
                        for i in 0..r {
                            for j in 0..pc {
                                gp[i * pc + j] += dy[i * total + col + j];
                            }
                        }
                        col += pc;
                    }
                }
                Op::GatherRows { table, indices } => {
                    let c = node.shape[1];
                    let gt = acc(&mut grads, nodes, *table);
                    for (t, &i) in indices.iter().enumerate() {
                        for j in 0..c {
                            gt[i * c + j] += dy[t * c + j];
                        }
                    }
                }
                Op::MaxPoolRows { src, argmax } => {
                    let c = argmax.len();
                    let ga = acc(&mut grads, nodes, *src);
                    for j in 0..c {
                        ga[argmax[j] * c + j] += dy[j];
                    }
                }
                Op::Sum(a) => {
                    for g in acc(&mut grads, nodes, *a).iter_mut() {
                        *g += dy[0];
                    }
                }
                Op::Cosine { a, b } => {
                    let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let na = va.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let nb = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let c = y[0];
                    let d = dy[0];
                    let ga = acc(&mut grads, nodes, *a);
                    for i in 0..va.len() {
                        ga[i] += d * (vb[i] / (na * nb) - c * va[i] / (na * na));
                    }
                    let gb = acc(&mut grads, nodes, *b);
                    for i in 0..vb.len() {
                        gb[i] += d * (va[i] / (na * nb) - c * vb[i] / (nb * nb));
                    }
                }
                Op::Softmax(a) => {
                    let dot: f64 = dy.iter().zip(y).map(|(d, s)| d * s).sum();
                    for ((g, d), s) in acc(&mut grads, nodes, *a).iter_mut().zip(&dy).zip(y) {
                        *g += s * (d - dot);
                    }
                }
                Op::AddRowBroadcast(a, b) => {
                    let (r, c) = as_matrix(&node.shape)?;
                    for (g, d) in acc(&mut grads, nodes, *a).iter_mut().zip(&dy) {
                        *g += d;
                    }
                    let gb = acc(&mut grads, nodes, *b);
                    for i in 0..r {
                        for j in 0..c {
                            gb[j] += dy[i * c + j];
                        }
                    }
                }
                Op::Unfold { src, window } => {
                    let (r, c) = as_matrix(&nodes[src.0].shape)?;
                    let pad = (window - 1) / 2;
                    let ga = acc(&mut grads, nodes, *src);
                    for t in 0..r {
                        for k in 0..*window {
                            let s = t + k;
                            if s < pad || s - pad >= r {
                                continue;
                            }
                            let s = s - pad;
                            let base = t * window * c + k * c;
                            for j in 0..c {
                                ga[s * c + j] += dy[base + j];
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}
