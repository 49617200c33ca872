//! Reverse-mode differentiation tape.
//!
//! Every operation appends a node holding its forward value; [`Var`] is a
//! copyable handle to a node. [`Tape::backward`] walks the nodes in reverse
//! recording order, which is a valid reverse topological order because
//! parents are always recorded before their children.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use super::AutodiffError;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    AddRow(usize, usize),
    AddConst(usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Log(usize),
    Clamp(usize, f64, f64),
    SoftmaxRows(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize),
    GatherRows(usize, Vec<usize>),
    Transpose(usize),
    SumAll(usize),
    SumAxis0(usize),
    SumAxis1(usize),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        normed: Tensor,
        inv_std: Vec<f64>,
    },
    CrossEntropy {
        logits: usize,
        targets: Vec<Option<usize>>,
        probs: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    params: HashMap<ParamId, Var>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

type Res = Result<Var, AutodiffError>;

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> Result<usize, AutodiffError> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(AutodiffError::Graph("variable does not belong to this tape".into()));
        }
        Ok(v.idx)
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn val(&self, i: usize) -> &Tensor {
        &self.nodes[i].value
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[self.idx(v).expect("foreign variable")].value
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.idx).and_then(Option::as_ref)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Binds a stored parameter to this tape; repeated calls return the same
    /// variable. Frozen parameters are bound as constants.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = store.get(id);
        let v = self.push(p.value.clone(), Op::Leaf, !p.frozen);
        self.params.insert(id, v);
        v
    }

    pub fn param_by_name(&mut self, store: &ParamStore, name: &str) -> Var {
        let id = store.id(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.param(store, id)
    }

    fn same_shape(&self, op: &'static str, a: usize, b: usize) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.val(a).shape(), self.val(b).shape());
        if sa != sb {
            return Err(AutodiffError::Shape {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Res {
        let (a, b) = (self.idx(a)?, self.idx(b)?);
        let (sa, sb) = (self.val(a).shape(), self.val(b).shape());
        if sa[1] != sb[0] {
            return Err(AutodiffError::Shape {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let v = self.val(a).matmul(self.val(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Res {
        let (a, b) = (self.idx(a)?, self.idx(b)?);
        self.same_shape("add", a, b)?;
        let v = self.val(a).zip_map(self.val(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Res {
        let (a, b) = (self.idx(a)?, self.idx(b)?);
        self.same_shape("sub", a, b)?;
        let v = self.val(a).zip_map(self.val(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Res {
        let (a, b) = (self.idx(a)?, self.idx(b)?);
        self.same_shape("mul", a, b)?;
        let v = self.val(a).zip_map(self.val(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Res {
        let a = self.idx(a)?;
        let v = self.val(a).map(|x| x * s);
        let rg = self.rg(a);
        Ok(self.push(v, Op::Scale(a, s), rg))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Res {
        let a = self.idx(a)?;
        let v = self.val(a).map(|x| x + s);
        let rg = self.rg(a);
        Ok(self.push(v, Op::AddScalar(a), rg))
    }

    /// Adds the `1 × n` row `row` to every row of `m`.
    pub fn add_row(&mut self, m: Var, row: Var) -> Res {
        let (m, r) = (self.idx(m)?, self.idx(row)?);
        let (sm, sr) = (self.val(m).shape(), self.val(r).shape());
        if sr != [1, sm[1]] {
            return Err(AutodiffError::Shape {
                op: "add_row",
                left: sm,
                right: sr,
            });
        }
        let mut v = self.val(m).clone();
        let rv = self.val(r).data().to_vec();
        for i in 0..sm[0] {
            for (x, b) in v.row_mut(i).iter_mut().zip(&rv) {
                *x += b;
            }
        }
        let rg = self.rg(m) || self.rg(r);
        Ok(self.push(v, Op::AddRow(m, r), rg))
    }

    /// Adds a constant tensor (e.g. an attention mask holding `-inf`).
    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Res {
        let a = self.idx(a)?;
        if self.val(a).shape() != c.shape() {
            return Err(AutodiffError::Shape {
                op: "add_const",
                left: self.val(a).shape(),
                right: c.shape(),
            });
        }
        let v = self.val(a).zip_map(c, |x, y| x + y);
        let rg = self.rg(a);
        Ok(self.push(v, Op::AddConst(a), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Res {
        let a = self.idx(a)?;
        let v = self.val(a).map(sigmoid);
        let rg = self.rg(a);
        Ok(self.push(v, Op::Sigmoid(a), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Res {
        let a = self.idx(a)?;
        let v = self.val(a).map(f64::tanh);
        let rg = self.rg(a);
        Ok(self.push(v, Op::Tanh(a), rg))
    }

    pub fn relu(&mut self, a: Var) -> Res {
        let a = self.idx(a)?;
        let v = self.val(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        Ok(self.push(v, Op::Relu(a), rg))
    }

    pub fn log(&mut self, a: Var) -> Res {
        let a = self.idx(a)?;
        let v = self.val(a).map(f64::ln);
        let rg = self.rg(a);
        Ok(self.push(v, Op::Log(a), rg))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping happened.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Res {
        let a = self.idx(a)?;
        let v = self.val(a).map(|x| x.clamp(lo, hi));
        let rg = self.rg(a);
        Ok(self.push(v, Op::Clamp(a, lo, hi), rg))
    }

    /// Row-wise softmax with max subtraction. Entries equal to `-inf` get
    /// probability zero.
    pub fn softmax_rows(&mut self, a: Var) -> Res {
        let a = self.idx(a)?;
        let v = softmax_rows(self.val(a));
        let rg = self.rg(a);
        Ok(self.push(v, Op::SoftmaxRows(a), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Res {
        let idx: Vec<usize> = parts.iter().map(|&p| self.idx(p)).collect::<Result<_, _>>()?;
        let rows = self.val(idx[0]).rows();
        for &i in &idx {
            if self.val(i).rows() != rows {
                return Err(AutodiffError::Shape {
                    op: "concat_cols",
                    left: self.val(idx[0]).shape(),
                    right: self.val(i).shape(),
                });
            }
        }
        let cols: usize = idx.iter().map(|&i| self.val(i).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &i in &idx {
                let src = self.val(i).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let rg = idx.iter().any(|&i| self.rg(i));
        Ok(self.push(out, Op::ConcatCols(idx), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Res {
        let idx: Vec<usize> = parts.iter().map(|&p| self.idx(p)).collect::<Result<_, _>>()?;
        let cols = self.val(idx[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &i in &idx {
            if self.val(i).cols() != cols {
                return Err(AutodiffError::Shape {
                    op: "concat_rows",
                    left: self.val(idx[0]).shape(),
                    right: self.val(i).shape(),
                });
            }
            data.extend_from_slice(self.val(i).data());
            rows += self.val(i).rows();
        }
        let rg = idx.iter().any(|&i| self.rg(i));
        Ok(self.push(Tensor::new(&[rows, cols], data), Op::ConcatRows(idx), rg))
    }

    /// Concatenation along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Res {
        match axis {
            0 => self.concat_rows(parts),
            _ => self.concat_cols(parts),
        }
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Res {
        let a = self.idx(a)?;
        let s = self.val(a).shape();
        if start + len > s[1] {
            return Err(AutodiffError::Shape {
                op: "slice_cols",
                left: s,
                right: [start, len],
            });
        }
        let mut out = Tensor::zeros(s[0], len);
        for r in 0..s[0] {
            out.row_mut(r)
                .copy_from_slice(&self.val(a).row(r)[start..start + len]);
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceCols(a, start), rg))
    }

    /// Selects rows by index; doubles as embedding lookup.
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Res {
        let a = self.idx(a)?;
        let s = self.val(a).shape();
        if let Some(&bad) = rows.iter().find(|&&r| r >= s[0]) {
            return Err(AutodiffError::Shape {
                op: "gather_rows",
                left: s,
                right: [bad, 0],
            });
        }
        let mut data = Vec::with_capacity(rows.len() * s[1]);
        for &r in rows {
            data.extend_from_slice(self.val(a).row(r));
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(&[rows.len(), s[1]], data),
            Op::GatherRows(a, rows.to_vec()),
            rg,
        ))
    }

    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Res {
        self.gather_rows(table, ids)
    }

    pub fn transpose(&mut self, a: Var) -> Res {
        let a = self.idx(a)?;
        let v = self.val(a).transpose();
        let rg = self.rg(a);
        Ok(self.push(v, Op::Transpose(a), rg))
    }

    pub fn sum_all(&mut self, a: Var) -> Res {
        let a = self.idx(a)?;
        let v = Tensor::scalar(self.val(a).sum());
        let rg = self.rg(a);
        Ok(self.push(v, Op::SumAll(a), rg))
    }

    pub fn mean_all(&mut self, a: Var) -> Res {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Sum along `axis`: 0 collapses rows (`1 × cols`), 1 collapses
    /// columns (`rows × 1`).
    pub fn sum(&mut self, a: Var, axis: usize) -> Res {
        let a = self.idx(a)?;
        let t = self.val(a);
        let [r, c] = t.shape();
        let (v, op) = if axis == 0 {
            let mut out = Tensor::zeros(1, c);
            for i in 0..r {
                for (o, x) in out.row_mut(0).iter_mut().zip(t.row(i)) {
                    *o += x;
                }
            }
            (out, Op::SumAxis0(a))
        } else {
            let data = (0..r).map(|i| t.row(i).iter().sum()).collect();
            (Tensor::new(&[r, 1], data), Op::SumAxis1(a))
        };
        let rg = self.rg(a);
        Ok(self.push(v, op, rg))
    }

    pub fn mean(&mut self, a: Var, axis: usize) -> Res {
        let [r, c] = self.value(a).shape();
        let n = if axis == 0 { r } else { c };
        let s = self.sum(a, axis)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Per-row normalization to zero mean and unit variance, then
    /// `gamma ⊙ x̂ + beta` with `1 × cols` scale and offset.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Res {
        let (x, g, b) = (self.idx(x)?, self.idx(gamma)?, self.idx(beta)?);
        let [r, c] = self.val(x).shape();
        for p in [g, b] {
            if self.val(p).shape() != [1, c] {
                return Err(AutodiffError::Shape {
                    op: "layer_norm",
                    left: [r, c],
                    right: self.val(p).shape(),
                });
            }
        }
        let xv = self.val(x);
        let mut normed = Tensor::zeros(r, c);
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = xv.row(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for (o, v) in normed.row_mut(i).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
        }
        let gv = self.val(g).data().to_vec();
        let bv = self.val(b).data().to_vec();
        let mut out = normed.clone();
        for i in 0..r {
            for ((o, gg), bb) in out.row_mut(i).iter_mut().zip(&gv).zip(&bv) {
                *o = *o * gg + bb;
            }
        }
        let rg = self.rg(x) || self.rg(g) || self.rg(b);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma: g,
                beta: b,
                normed,
                inv_std,
            },
            rg,
        ))
    }

    /// Summed negative log-likelihood of `targets` under the row-softmax of
    /// `logits`; rows with `None` targets are ignored.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Res {
        let l = self.idx(logits)?;
        let [r, c] = self.val(l).shape();
        if targets.len() != r || targets.iter().flatten().any(|&t| t >= c) {
            return Err(AutodiffError::Shape {
                op: "cross_entropy",
                left: [r, c],
                right: [targets.len(), 0],
            });
        }
        let probs = softmax_rows(self.val(l));
        let mut loss = 0.0;
        for (i, t) in targets.iter().enumerate() {
            if let Some(t) = t {
                let row = self.val(l).row(i);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                loss += lse - row[*t];
            }
        }
        let rg = self.rg(l);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: l,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Propagates gradients from the scalar `loss` to every node that
    /// requires them. Allowed once per tape.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        let l = self.idx(loss)?;
        if self.backward_done {
            return Err(AutodiffError::Graph("backward already ran on this tape".into()));
        }
        if self.val(l).len() != 1 {
            return Err(AutodiffError::Graph(format!(
                "loss must be scalar, got shape {:?}",
                self.val(l).shape()
            )));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[l] = Some(Tensor::scalar(1.0));

        for i in (0..=l).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let nodes = &self.nodes;
        let mut acc = |j: usize, delta: Tensor| {
            if !nodes[j].requires_grad {
                return;
            }
            match &mut grads[j] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let out = &nodes[i].value;
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if nodes[*a].requires_grad {
                    acc(*a, g.matmul_t(&nodes[*b].value));
                }
                if nodes[*b].requires_grad {
                    acc(*b, nodes[*a].value.t_matmul(g));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(&nodes[*b].value, |x, y| x * y));
                acc(*b, g.zip_map(&nodes[*a].value, |x, y| x * y));
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
            Op::AddScalar(a) | Op::AddConst(a) => acc(*a, g.clone()),
            Op::AddRow(m, r) => {
                acc(*m, g.clone());
                if nodes[*r].requires_grad {
                    let mut rs = Tensor::zeros(1, g.cols());
                    for k in 0..g.rows() {
                        for (o, x) in rs.row_mut(0).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    acc(*r, rs);
                }
            }
            Op::Sigmoid(a) => acc(*a, g.zip_map(out, |gg, s| gg * s * (1.0 - s))),
            Op::Tanh(a) => acc(*a, g.zip_map(out, |gg, t| gg * (1.0 - t * t))),
            Op::Relu(a) => acc(*a, g.zip_map(&nodes[*a].value, |gg, x| if x > 0.0 { gg } else { 0.0 })),
            Op::Log(a) => acc(*a, g.zip_map(&nodes[*a].value, |gg, x| gg / x)),
            Op::Clamp(a, lo, hi) => acc(
                *a,
                g.zip_map(&nodes[*a].value, |gg, x| {
                    if x < *lo || x > *hi {
                        0.0
                    } else {
                        gg
                    }
                }),
            ),
            Op::SoftmaxRows(a) => {
                let mut d = Tensor::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let (y, gy) = (out.row(r), g.row(r));
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for ((o, yy), gg) in d.row_mut(r).iter_mut().zip(y).zip(gy) {
                        *o = yy * (gg - dot);
                    }
                }
                acc(*a, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = nodes[p].value.cols();
                    if nodes[p].requires_grad {
                        let mut d = Tensor::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            d.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        acc(p, d);
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let [r, c] = nodes[p].value.shape();
                    if nodes[p].requires_grad {
                        let d = Tensor::new(&[r, c], g.data()[off * c..(off + r) * c].to_vec());
                        acc(p, d);
                    }
                    off += r;
                }
            }
            Op::SliceCols(a, start) => {
                let [r, c] = nodes[*a].value.shape();
                let mut d = Tensor::zeros(r, c);
                for k in 0..r {
                    d.row_mut(k)[*start..*start + g.cols()].copy_from_slice(g.row(k));
                }
                acc(*a, d);
            }
            Op::GatherRows(a, rows) => {
                let [r, c] = nodes[*a].value.shape();
                let mut d = Tensor::zeros(r, c);
                for (k, &src) in rows.iter().enumerate() {
                    for (o, x) in d.row_mut(src).iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
                acc(*a, d);
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::SumAll(a) => {
                let [r, c] = nodes[*a].value.shape();
                acc(*a, Tensor::filled(r, c, g.item()));
            }
            Op::SumAxis0(a) => {
                let [r, c] = nodes[*a].value.shape();
                let mut d = Tensor::zeros(r, c);
                for k in 0..r {
                    d.row_mut(k).copy_from_slice(g.row(0));
                }
                acc(*a, d);
            }
            Op::SumAxis1(a) => {
                let [r, c] = nodes[*a].value.shape();
                let mut d = Tensor::zeros(r, c);
                for k in 0..r {
                    d.row_mut(k).fill(g.get(k, 0));
                }
                acc(*a, d);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normed,
                inv_std,
            } => {
                let [r, c] = normed.shape();
                let gv = nodes[*gamma].value.data();
                if nodes[*gamma].requires_grad {
                    let mut dg = Tensor::zeros(1, c);
                    for k in 0..r {
                        for ((o, gg), n) in dg.row_mut(0).iter_mut().zip(g.row(k)).zip(normed.row(k)) {
                            *o += gg * n;
                        }
                    }
                    acc(*gamma, dg);
                }
                if nodes[*beta].requires_grad {
                    let mut db = Tensor::zeros(1, c);
                    for k in 0..r {
                        for (o, gg) in db.row_mut(0).iter_mut().zip(g.row(k)) {
                            *o += gg;
                        }
                    }
                    acc(*beta, db);
                }
                if nodes[*x].requires_grad {
                    let mut dx = Tensor::zeros(r, c);
                    let n = c as f64;
                    for k in 0..r {
                        let dn: Vec<f64> = g.row(k).iter().zip(gv).map(|(a, b)| a * b).collect();
                        let mean_dn = dn.iter().sum::<f64>() / n;
                        let mean_dn_n =
                            dn.iter().zip(normed.row(k)).map(|(a, b)| a * b).sum::<f64>() / n;
                        for ((o, d), nn) in dx.row_mut(k).iter_mut().zip(&dn).zip(normed.row(k)) {
                            *o = inv_std[k] * (d - mean_dn - nn * mean_dn_n);
                        }
                    }
                    acc(*x, dx);
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let scale = g.item();
                let mut d = Tensor::zeros(probs.rows(), probs.cols());
                for (k, t) in targets.iter().enumerate() {
                    if let Some(t) = t {
                        for (o, p) in d.row_mut(k).iter_mut().zip(probs.row(k)) {
                            *o = p * scale;
                        }
                        d.row_mut(k)[*t] -= scale;
                    }
                }
                acc(*logits, d);
            }
        }
    }

    /// Gradients of every bound parameter, ordered by id.
    pub fn param_grads(&self) -> Vec<(ParamId, Tensor)> {
        let mut out: Vec<(ParamId, Tensor)> = self
            .params
            .iter()
            .filter_map(|(&id, &v)| self.grad(v).map(|g| (id, g.clone())))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }

    /// Adds this tape's parameter gradients into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for (&id, v) in &self.params {
            if let Some(g) = self.grad(*v) {
                store.get_mut(id).grad.add_assign(g);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    for r in 0..t.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    out
}
