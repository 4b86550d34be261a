//! Reverse-mode differentiation over a linear record of tensor operations.
//!
//! Values are built by calling methods on a [`Tape`]; each returns a [`Var`]
//! handle. [`Tape::backward`] walks the record in reverse from a scalar and
//! accumulates gradients for every value that depends on a tracked leaf.
//! Constants and detached values never receive gradient, and neither does
//! anything upstream of them.

use crate::error::NnError;
use crate::params::{ParamId, ParameterStore};
use crate::tensor::{gemm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Elu(Var),
    Abs(Var),
    Sum(Var),
    SumCols(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    GatherCols(Var, Vec<usize>),
    SoftmaxRows(Var),
    GroupAttention {
        q: Var,
        k: Var,
        v: Var,
        group: usize,
        probs: Vec<f64>,
    },
    GroupMean(Var, usize),
    BatchVecMat(Var, Var, usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Option<Var>>,
    frozen: bool,
}

/// Gradients from one backward pass.
#[derive(Debug)]
pub struct Grads {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Option<Tensor>>,
}

impl Grads {
    /// Gradient of a recorded value (`None` if it received none).
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    /// Parameter gradients indexed by parameter id, padded to `store.len()`.
    pub fn into_param_grads(mut self, store: &ParameterStore) -> Vec<Option<Tensor>> {
        self.params.resize(store.len(), None);
        self.params
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.index()).and_then(Option::as_ref)
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) {
    if a.shape() != b.shape() {
        panic!(
            "{}",
            NnError::ShapeMismatch {
                op,
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            }
        );
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn zeros_like_slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape on which parameters are recorded as constants. Used for target
    /// networks and action selection, where no gradient is needed.
    pub fn frozen() -> Self {
        Self {
            frozen: true,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Records a parameter once per tape; later calls return the same handle.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        if self.params.len() <= id.index() {
            self.params.resize(id.index() + 1, None);
        }
        if let Some(v) = self.params[id.index()] {
            return v;
        }
        let tracked = !self.frozen;
        let v = self.push(store.get(id).clone(), Op::Param(id), tracked);
        self.params[id.index()] = Some(v);
        v
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that receives gradient (for input-sensitivity checks).
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Copy of `v` cut from the graph: no gradient flows through it.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self
            .value(a)
            .matmul(self.value(b))
            .unwrap_or_else(|e| panic!("{e}"));
        let t = self.tracked(a) || self.tracked(b);
        self.push(out, Op::MatMul(a, b), t)
    }

    /// `x + b` with the single row `b` broadcast over every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.len() != xv.cols() {
            panic!(
                "{}",
                NnError::ShapeMismatch {
                    op: "add_row",
                    left: xv.shape().to_vec(),
                    right: bv.shape().to_vec(),
                }
            );
        }
        let c = xv.cols();
        let mut out = xv.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += bv.data()[i % c];
        }
        let t = self.tracked(x) || self.tracked(b);
        self.push(out, Op::AddRow(x, b), t)
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(name, av, bv);
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        let t = self.tracked(a) || self.tracked(b);
        self.push(out, op, t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).map(f);
        let t = self.tracked(x);
        self.push(out, op, t)
    }

    /// `a * x + b` elementwise.
    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        self.unary(x, |v| a * v + b, Op::Affine(x, a))
    }

    pub fn scale(&mut self, x: Var, a: f64) -> Var {
        self.affine(x, a, 0.0)
    }

    pub fn one_minus(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 1.0)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { v.exp_m1() }, Op::Elu(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, Op::Abs(x))
    }

    /// Sum of all entries, as a `1 × 1` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let t = self.tracked(x);
        self.push(Tensor::scalar(s), Op::Sum(x), t)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Row sums: `R × C → R × 1`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = (0..xv.rows()).map(|r| xv.row_slice(r).iter().sum()).collect();
        let out = Tensor::matrix(xv.rows(), 1, data);
        let t = self.tracked(x);
        self.push(out, Op::SumCols(x), t)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.cols(), "slice_cols out of range");
        let mut data = Vec::with_capacity(xv.rows() * len);
        for r in 0..xv.rows() {
            data.extend_from_slice(&xv.row_slice(r)[start..start + len]);
        }
        let out = Tensor::matrix(xv.rows(), len, data);
        let t = self.tracked(x);
        self.push(out, Op::SliceCols(x, start), t)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let pv = self.value(p);
                assert_eq!(pv.rows(), rows, "concat_cols row mismatch");
                data.extend_from_slice(pv.row_slice(r));
            }
        }
        let t = parts.iter().any(|&p| self.tracked(p));
        self.push(Tensor::matrix(rows, cols, data), Op::ConcatCols(parts.to_vec()), t)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(pv.data());
            rows += pv.rows();
        }
        let t = parts.iter().any(|&p| self.tracked(p));
        self.push(Tensor::matrix(rows, cols, data), Op::ConcatRows(parts.to_vec()), t)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let out = self
            .value(x)
            .clone()
            .reshape(shape)
            .unwrap_or_else(|e| panic!("{e}"));
        let t = self.tracked(x);
        self.push(out, Op::Reshape(x), t)
    }

    /// Picks column `idx[r]` from every row `r`: `R × C → R × 1`.
    pub fn gather_cols(&mut self, x: Var, idx: &[usize]) -> Var {
        let xv = self.value(x);
        assert_eq!(idx.len(), xv.rows(), "gather_cols needs one index per row");
        let data = idx.iter().enumerate().map(|(r, &c)| xv.get(r, c)).collect();
        let out = Tensor::matrix(xv.rows(), 1, data);
        let t = self.tracked(x);
        self.push(out, Op::GatherCols(x, idx.to_vec()), t)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let c = xv.cols();
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(c) {
            softmax_in_place(row);
        }
        let t = self.tracked(x);
        self.push(out, Op::SoftmaxRows(x), t)
    }

    /// Scaled dot-product attention within consecutive blocks of `group`
    /// rows: for each block, `softmax(Q Kᵀ / √d) V`.
    pub fn group_attention(&mut self, q: Var, k: Var, v: Var, group: usize) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        same_shape("group_attention q/k", qv, kv);
        assert_eq!(qv.rows(), vv.rows(), "group_attention value rows");
        assert!(group > 0 && qv.rows() % group == 0, "rows must split into groups");
        let d = qv.cols();
        let dv = vv.cols();
        let scale = 1.0 / (d as f64).sqrt();
        let blocks = qv.rows() / group;
        let mut probs = vec![0.0; blocks * group * group];
        let mut out = vec![0.0; qv.rows() * dv];
        for g in 0..blocks {
            let base = g * group;
            let p = &mut probs[g * group * group..(g + 1) * group * group];
            for i in 0..group {
                let qi = qv.row_slice(base + i);
                let row = &mut p[i * group..(i + 1) * group];
                for (j, s) in row.iter_mut().enumerate() {
                    let kj = kv.row_slice(base + j);
                    *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                softmax_in_place(row);
                let o = &mut out[(base + i) * dv..(base + i + 1) * dv];
                for (j, &w) in row.iter().enumerate() {
                    for (x, y) in o.iter_mut().zip(vv.row_slice(base + j)) {
                        *x += w * y;
                    }
                }
            }
        }
        let t = self.tracked(q) || self.tracked(k) || self.tracked(v);
        let rows = qv.rows();
        self.push(
            Tensor::matrix(rows, dv, out),
            Op::GroupAttention { q, k, v, group, probs },
            t,
        )
    }

    /// Softmax weights of every `group_attention` recorded so far, in record
    /// order; each entry holds one `group × group` block per row group.
    pub fn attention_weights(&self) -> Vec<&[f64]> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::GroupAttention { probs, .. } => Some(probs.as_slice()),
                _ => None,
            })
            .collect()
    }

    /// Smallest `|x|` among inputs to ReLU and absolute-value nodes. Finite
    /// differences with a step larger than this may straddle a kink.
    pub fn kink_margin(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) | Op::Abs(x) => Some(x),
                _ => None,
            })
            .flat_map(|x| self.nodes[x.0].value.data().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Mean over consecutive blocks of `group` rows: `R × C → (R / group) × C`.
    pub fn group_mean(&mut self, x: Var, group: usize) -> Var {
        let xv = self.value(x);
        assert!(group > 0 && xv.rows() % group == 0, "rows must split into groups");
        let c = xv.cols();
        let blocks = xv.rows() / group;
        let mut out = vec![0.0; blocks * c];
        for g in 0..blocks {
            let o = &mut out[g * c..(g + 1) * c];
            for i in 0..group {
                for (a, b) in o.iter_mut().zip(xv.row_slice(g * group + i)) {
                    *a += b;
                }
            }
            o.iter_mut().for_each(|a| *a /= group as f64);
        }
        let t = self.tracked(x);
        self.push(Tensor::matrix(blocks, c, out), Op::GroupMean(x, group), t)
    }

    /// Row-wise vector-matrix product: `v` is `M × n`, `w` is `M × (n·e)`
    /// holding one row-major `n × e` matrix per row; the result is `M × e`.
    pub fn batch_vec_mat(&mut self, v: Var, w: Var, e: usize) -> Var {
        let (vv, wv) = (self.value(v), self.value(w));
        let (m, n) = (vv.rows(), vv.cols());
        if wv.rows() != m || wv.cols() != n * e {
            panic!(
                "{}",
                NnError::ShapeMismatch {
                    op: "batch_vec_mat",
                    left: vv.shape().to_vec(),
                    right: wv.shape().to_vec(),
                }
            );
        }
        let mut out = vec![0.0; m * e];
        for r in 0..m {
            let vr = vv.row_slice(r);
            let wr = wv.row_slice(r);
            let o = &mut out[r * e..(r + 1) * e];
            for (i, &a) in vr.iter().enumerate() {
                for (x, y) in o.iter_mut().zip(&wr[i * e..(i + 1) * e]) {
                    *x += a * y;
                }
            }
        }
        let t = self.tracked(v) || self.tracked(w);
        self.push(Tensor::matrix(m, e, out), Op::BatchVecMat(v, w, e), t)
    }

    /// Reverse accumulation from a recorded `1 × 1` value.
    pub fn backward(&self, loss: Var) -> Result<Grads, NnError> {
        let node = self.nodes.get(loss.0).ok_or(NnError::NotRecorded(loss.0))?;
        if node.value.len() != 1 {
            return Err(NnError::NotScalar(node.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut params: Vec<Option<Tensor>> = Vec::new();
        grads[loss.0] = Some(Tensor::filled(node.value.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads, &mut params);
            grads[i] = Some(g);
        }
        for g in grads.iter().chain(params.iter()).flatten() {
            if !g.all_finite() {
                return Err(NnError::NonFinite("backward"));
            }
        }
        Ok(Grads {
            nodes: grads,
            params,
        })
    }

    fn backprop_node(
        &self,
        node: &Node,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
        params: &mut Vec<Option<Tensor>>,
    ) {
        let val = |v: Var| &self.nodes[v.0].value;
        let want = |v: Var| self.nodes[v.0].tracked;
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => {
                if params.len() <= id.index() {
                    params.resize(id.index() + 1, None);
                }
                match &mut params[id.index()] {
                    Some(acc) => acc.add_assign(g),
                    slot => *slot = Some(g.clone()),
                }
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if want(*a) {
                    let da = zeros_like_slot(grads, *a, av.shape());
                    // dA = dC Bᵀ
                    gemm(m, n, k, 1.0, g.data(), n as isize, 1, bv.data(), 1, n as isize, 1.0, da.data_mut());
                }
                if want(*b) {
                    let db = zeros_like_slot(grads, *b, bv.shape());
                    // dB = Aᵀ dC
                    gemm(k, m, n, 1.0, av.data(), 1, k as isize, g.data(), n as isize, 1, 1.0, db.data_mut());
                }
            }
            Op::AddRow(x, b) => {
                if want(*x) {
                    accumulate(grads, *x, g.clone());
                }
                if want(*b) {
                    let bv = val(*b);
                    let c = bv.len();
                    let mut db = vec![0.0; c];
                    for (i, v) in g.data().iter().enumerate() {
                        db[i % c] += v;
                    }
                    accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), db).unwrap());
                }
            }
            Op::Add(a, b) => {
                if want(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if want(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if want(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if want(*b) {
                    accumulate(grads, *b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if want(*a) {
                    let d = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                    accumulate(grads, *a, Tensor::new(av.shape().to_vec(), d).unwrap());
                }
                if want(*b) {
                    let d = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                    accumulate(grads, *b, Tensor::new(bv.shape().to_vec(), d).unwrap());
                }
            }
            Op::Affine(x, a) => accumulate(grads, *x, g.map(|v| a * v)),
            Op::Relu(x) => {
                let d = g.data().iter().zip(out.data()).map(|(&gv, &o)| if o > 0.0 { gv } else { 0.0 }).collect();
                accumulate(grads, *x, Tensor::new(out.shape().to_vec(), d).unwrap());
            }
            Op::Sigmoid(x) => {
                let d = g.data().iter().zip(out.data()).map(|(&gv, &o)| gv * o * (1.0 - o)).collect();
                accumulate(grads, *x, Tensor::new(out.shape().to_vec(), d).unwrap());
            }
            Op::Tanh(x) => {
                let d = g.data().iter().zip(out.data()).map(|(&gv, &o)| gv * (1.0 - o * o)).collect();
                accumulate(grads, *x, Tensor::new(out.shape().to_vec(), d).unwrap());
            }
            Op::Elu(x) => {
                let xv = val(*x);
                let d = g
                    .data()
                    .iter()
                    .zip(xv.data().iter().zip(out.data()))
                    .map(|(&gv, (&xi, &o))| if xi > 0.0 { gv } else { gv * (o + 1.0) })
                    .collect();
                accumulate(grads, *x, Tensor::new(out.shape().to_vec(), d).unwrap());
            }
            Op::Abs(x) => {
                let xv = val(*x);
                let d = g.data().iter().zip(xv.data()).map(|(&gv, &xi)| gv * sign(xi)).collect();
                accumulate(grads, *x, Tensor::new(out.shape().to_vec(), d).unwrap());
            }
            Op::Sum(x) => {
                let xv = val(*x);
                accumulate(grads, *x, Tensor::filled(xv.shape(), g.item()));
            }
            Op::SumCols(x) => {
                let xv = val(*x);
                let c = xv.cols();
                let d = (0..xv.len()).map(|i| g.data()[i / c]).collect();
                accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), d).unwrap());
            }
            Op::SliceCols(x, start) => {
                let xv = val(*x);
                let len = out.cols();
                let dx = zeros_like_slot(grads, *x, xv.shape());
                let c = xv.cols();
                for r in 0..out.rows() {
                    for j in 0..len {
                        dx.data_mut()[r * c + start + j] += g.data()[r * len + j];
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let c = out.cols();
                let mut off = 0;
                for &p in parts {
                    let pv = val(p);
                    let pc = pv.cols();
                    if want(p) {
                        let mut d = Vec::with_capacity(pv.len());
                        for r in 0..out.rows() {
                            d.extend_from_slice(&g.data()[r * c + off..r * c + off + pc]);
                        }
                        accumulate(grads, p, Tensor::new(pv.shape().to_vec(), d).unwrap());
                    }
                    off += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let pv = val(p);
                    if want(p) {
                        let d = g.data()[off..off + pv.len()].to_vec();
                        accumulate(grads, p, Tensor::new(pv.shape().to_vec(), d).unwrap());
                    }
                    off += pv.len();
                }
            }
            Op::Reshape(x) => {
                let xv = val(*x);
                accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), g.data().to_vec()).unwrap());
            }
            Op::GatherCols(x, idx) => {
                let xv = val(*x);
                let c = xv.cols();
                let dx = zeros_like_slot(grads, *x, xv.shape());
                for (r, &j) in idx.iter().enumerate() {
                    dx.data_mut()[r * c + j] += g.data()[r];
                }
            }
            Op::SoftmaxRows(x) => {
                let c = out.cols();
                let mut d = vec![0.0; out.len()];
                for r in 0..out.rows() {
                    let p = out.row_slice(r);
                    let gr = &g.data()[r * c..(r + 1) * c];
                    let dot: f64 = p.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        d[r * c + j] = p[j] * (gr[j] - dot);
                    }
                }
                accumulate(grads, *x, Tensor::new(out.shape().to_vec(), d).unwrap());
            }
            Op::GroupAttention { q, k, v, group, probs } => {
                let (qv, kv, vv) = (val(*q), val(*k), val(*v));
                let n = *group;
                let d = qv.cols();
                let dv = vv.cols();
                let scale = 1.0 / (d as f64).sqrt();
                let mut dq = vec![0.0; qv.len()];
                let mut dk = vec![0.0; kv.len()];
                let mut dvv = vec![0.0; vv.len()];
                let mut ds = vec![0.0; n * n];
                for blk in 0..qv.rows() / n {
                    let base = blk * n;
                    let p = &probs[blk * n * n..(blk + 1) * n * n];
                    for i in 0..n {
                        let go = &g.data()[(base + i) * dv..(base + i + 1) * dv];
                        // dP_ij = dO_i · V_j ; dV_j += P_ij dO_i
                        let mut dp = vec![0.0; n];
                        for j in 0..n {
                            let vj = vv.row_slice(base + j);
                            dp[j] = go.iter().zip(vj).map(|(a, b)| a * b).sum();
                            let w = p[i * n + j];
                            for (acc, &x) in dvv[(base + j) * dv..(base + j + 1) * dv].iter_mut().zip(go) {
                                *acc += w * x;
                            }
                        }
                        let dot: f64 = (0..n).map(|j| dp[j] * p[i * n + j]).sum();
                        for j in 0..n {
                            ds[i * n + j] = p[i * n + j] * (dp[j] - dot) * scale;
                        }
                    }
                    for i in 0..n {
                        for j in 0..n {
                            let s = ds[i * n + j];
                            if s == 0.0 {
                                continue;
                            }
                            let (qi, kj) = (qv.row_slice(base + i), kv.row_slice(base + j));
                            for c in 0..d {
                                dq[(base + i) * d + c] += s * kj[c];
                                dk[(base + j) * d + c] += s * qi[c];
                            }
                        }
                    }
                }
                if want(*q) {
                    accumulate(grads, *q, Tensor::new(qv.shape().to_vec(), dq).unwrap());
                }
                if want(*k) {
                    accumulate(grads, *k, Tensor::new(kv.shape().to_vec(), dk).unwrap());
                }
                if want(*v) {
                    accumulate(grads, *v, Tensor::new(vv.shape().to_vec(), dvv).unwrap());
                }
            }
            Op::GroupMean(x, group) => {
                let xv = val(*x);
                let c = xv.cols();
                let inv = 1.0 / *group as f64;
                let d = (0..xv.len())
                    .map(|i| g.data()[(i / c / group) * c + i % c] * inv)
                    .collect();
                accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), d).unwrap());
            }
            Op::BatchVecMat(v, w, e) => {
                let (vv, wv) = (val(*v), val(*w));
                let (m, n, e) = (vv.rows(), vv.cols(), *e);
                if want(*v) {
                    let mut dv = vec![0.0; vv.len()];
                    for r in 0..m {
                        let gr = &g.data()[r * e..(r + 1) * e];
                        let wr = wv.row_slice(r);
                        for i in 0..n {
                            dv[r * n + i] = gr.iter().zip(&wr[i * e..(i + 1) * e]).map(|(a, b)| a * b).sum();
                        }
                    }
                    accumulate(grads, *v, Tensor::new(vv.shape().to_vec(), dv).unwrap());
                }
                if want(*w) {
                    let mut dw = vec![0.0; wv.len()];
                    for r in 0..m {
                        let gr = &g.data()[r * e..(r + 1) * e];
                        for i in 0..n {
                            let a = vv.get(r, i);
                            for (x, y) in dw[r * n * e + i * e..r * n * e + (i + 1) * e].iter_mut().zip(gr) {
                                *x = a * y;
                            }
                        }
                    }
                    accumulate(grads, *w, Tensor::new(wv.shape().to_vec(), dw).unwrap());
                }
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}
