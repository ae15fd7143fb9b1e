//! Tape-based reverse-mode differentiation.
//!
//! Every operation on a [`Tape`] evaluates eagerly, appends one node holding
//! its value plus whatever it needs for the backward rule, and returns a
//! [`Var`] handle. Because nodes can only reference earlier nodes, the node
//! list is already in topological order and [`Tape::backward`] is a single
//! reverse sweep that sums contributions at fan-out points.

use super::tensor::{gemm, Layout, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Jacobian supplied by the caller of [`Tape::custom`] for one input.
#[derive(Clone, Debug)]
pub enum Jacobian {
    /// Row-major `[out_numel × in_numel]`.
    Dense(Vec<f64>),
    /// Output row `r` depends only on input row `r`. `blocks` holds `rows`
    /// consecutive row-major `[out_cols × in_cols]` blocks.
    RowBlocks {
        rows: usize,
        out_cols: usize,
        in_cols: usize,
        blocks: Vec<f64>,
    },
    /// Output does not depend on this input.
    Zero,
}

#[derive(Clone, Copy, Debug)]
enum Bcast {
    Same,
    LhsScalar,
    RhsScalar,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize, Bcast),
    Sub(usize, usize, Bcast),
    Mul(usize, usize),
    AddBias(usize, usize),
    Scale(usize, f64),
    AddConst(usize),
    Tanh(usize),
    Gelu(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Softmax(usize),
    SliceRows(usize, usize),
    SliceCols(usize, usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    GatherRows(usize, Vec<usize>),
    Reshape(usize),
    Sum(usize),
    Mean(usize),
    Custom(Vec<usize>, Vec<Jacobian>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    requires: Vec<bool>,
}

impl Gradients {
    /// Gradient for `v`. Tensors that require grad but were not reached get a
    /// zero tensor; tensors that do not require grad get `None`.
    pub fn get(&self, v: Var) -> Option<Tensor> {
        if !self.requires[v.0] {
            return None;
        }
        let shape = self.shapes[v.0].clone();
        Some(match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        })
    }

    /// Like [`get`](Self::get) but returns zeros for constants as well.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v).unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / SQRT_2))
}

pub fn gelu_grad_scalar(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2("matmul")?;
        let (k2, n) = self.value(b).dims2("matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            Layout::N,
            self.value(b).data(),
            Layout::N,
            0.0,
            &mut out,
        );
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a.0, b.0), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims2("transpose")?;
        let src = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.rg(&[a.0]);
        Ok(self.push(Tensor::new(vec![c, r], out)?, Op::Transpose(a.0), rg))
    }

    fn bcast(&self, op: &'static str, a: Var, b: Var) -> Result<Bcast> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            Ok(Bcast::Same)
        } else if ta.is_scalar() {
            Ok(Bcast::LhsScalar)
        } else if tb.is_scalar() {
            Ok(Bcast::RhsScalar)
        } else {
            Err(Error::dim(op, ta.shape(), tb.shape()))
        }
    }

    fn zip_bcast(&self, a: Var, b: Var, bc: Bcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        match bc {
            Bcast::Same => {
                let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
                Tensor::new(ta.shape().to_vec(), data).expect("same shape")
            }
            Bcast::LhsScalar => {
                let s = ta.item();
                let data = tb.data().iter().map(|&y| f(s, y)).collect();
                Tensor::new(tb.shape().to_vec(), data).expect("same shape")
            }
            Bcast::RhsScalar => {
                let s = tb.item();
                let data = ta.data().iter().map(|&x| f(x, s)).collect();
                Tensor::new(ta.shape().to_vec(), data).expect("same shape")
            }
        }
    }

    /// Elementwise sum; equal shapes or one scalar operand.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let bc = self.bcast("add", a, b)?;
        let out = self.zip_bcast(a, b, bc, |x, y| x + y);
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(out, Op::Add(a.0, b.0, bc), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let bc = self.bcast("sub", a, b)?;
        let out = self.zip_bcast(a, b, bc, |x, y| x - y);
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(out, Op::Sub(a.0, b.0, bc), rg))
    }

    /// Elementwise (Hadamard) product of equal-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("mul", self.shape(a), self.shape(b)));
        }
        let out = self.zip_bcast(a, b, Bcast::Same, |x, y| x * y);
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(out, Op::Mul(a.0, b.0), rg))
    }

    /// Adds a length-`d` bias to every row of a `[.. × d]` tensor.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let d = self.value(x).last_dim();
        if self.shape(bias) != [d] {
            return Err(Error::dim("add_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias).data();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(d) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        let rg = self.rg(&[x.0, bias.0]);
        Ok(self.push(out, Op::AddBias(x.0, bias.0), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= c);
        let rg = self.rg(&[x.0]);
        self.push(out, Op::Scale(x.0, c), rg)
    }

    pub fn add_const(&mut self, x: Var, c: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v += c);
        let rg = self.rg(&[x.0]);
        self.push(out, Op::AddConst(x.0), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        let rg = self.rg(&[x.0]);
        self.push(out, Op::Tanh(x.0), rg)
    }

    /// Exact GELU, `0.5·x·(1 + erf(x/√2))`.
    pub fn gelu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = gelu_scalar(*v));
        let rg = self.rg(&[x.0]);
        self.push(out, Op::Gelu(x.0), rg)
    }

    /// Normalises over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let d = self.value(x).last_dim();
        if d == 0 || self.value(x).shape().is_empty() {
            return Err(Error::dim("layer_norm", self.shape(x), &[d]));
        }
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(Error::dim("layer_norm", self.shape(x), self.shape(gain)));
        }
        let tx = self.value(x);
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let rows = tx.numel() / d;
        let mut xhat = vec![0.0; tx.numel()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; tx.numel()];
        for r in 0..rows {
            let row = &tx.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let value = Tensor::new(tx.shape().to_vec(), out)?;
        let rg = self.rg(&[x.0, gain.0, bias.0]);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Softmax over the last axis with max subtraction.
    pub fn softmax_last(&mut self, x: Var) -> Result<Var> {
        let k = self.value(x).last_dim();
        if k == 0 {
            return Err(Error::dim("softmax_last", self.shape(x), &[1]));
        }
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(k) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let rg = self.rg(&[x.0]);
        Ok(self.push(out, Op::Softmax(x.0), rg))
    }

    /// Rows `start..start+len` of a 2-D tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.value(x).dims2("slice_rows")?;
        if start + len > r {
            return Err(Error::Index {
                what: "row",
                index: start + len,
                limit: r,
            });
        }
        let data = self.value(x).data()[start * c..(start + len) * c].to_vec();
        let rg = self.rg(&[x.0]);
        Ok(self.push(Tensor::new(vec![len, c], data)?, Op::SliceRows(x.0, start), rg))
    }

    /// Columns `start..start+len` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.value(x).dims2("slice_cols")?;
        if start + len > c {
            return Err(Error::Index {
                what: "column",
                index: start + len,
                limit: c,
            });
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        let rg = self.rg(&[x.0]);
        Ok(self.push(Tensor::new(vec![r, len], data)?, Op::SliceCols(x.0, start), rg))
    }

    /// Final row of an `(L × d)` tensor, as a `(1 × d)` tensor.
    pub fn slice_last_timestep(&mut self, x: Var) -> Result<Var> {
        let (r, _) = self.value(x).dims2("slice_last_timestep")?;
        if r == 0 {
            return Err(Error::dim("slice_last_timestep", self.shape(x), &[1]));
        }
        self.slice_rows(x, r - 1, 1)
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (r, c) = self.value(x).dims2("gather_rows")?;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            if i >= r {
                return Err(Error::Index {
                    what: "row",
                    index: i,
                    limit: r,
                });
            }
            data.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let rg = self.rg(&[x.0]);
        Ok(self.push(
            Tensor::new(vec![rows.len(), c], data)?,
            Op::GatherRows(x.0, rows.to_vec()),
            rg,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = match parts.first() {
            Some(&p) => self.value(p).dims2("concat_rows")?.1,
            None => return Err(Error::contract("concat_rows of zero tensors")),
        };
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, pc) = self.value(p).dims2("concat_rows")?;
            if pc != c {
                return Err(Error::dim("concat_rows", &[rows, c], self.shape(p)));
            }
            data.extend_from_slice(self.value(p).data());
            rows += r;
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.rg(&ids);
        Ok(self.push(Tensor::new(vec![rows, c], data)?, Op::ConcatRows(ids), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = match parts.first() {
            Some(&p) => self.value(p).dims2("concat_cols")?.0,
            None => return Err(Error::contract("concat_cols of zero tensors")),
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = self.value(p).dims2("concat_cols")?;
            if pr != r {
                return Err(Error::dim("concat_cols", &[r], self.shape(p)));
            }
            widths.push(pc);
        }
        let c: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.rg(&ids);
        Ok(self.push(Tensor::new(vec![r, c], data)?, Op::ConcatCols(ids), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).clone().reshaped(shape)?;
        let rg = self.rg(&[x.0]);
        Ok(self.push(out, Op::Reshape(x.0), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(&[x.0]);
        self.push(Tensor::scalar(s), Op::Sum(x.0), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.sum() / t.numel() as f64;
        let rg = self.rg(&[x.0]);
        self.push(Tensor::scalar(s), Op::Mean(x.0), rg)
    }

    /// Records an operation evaluated outside the tape.
    ///
    /// `forward` receives the input values and returns the output together
    /// with one [`Jacobian`] per input. The Jacobians are used verbatim by
    /// the backward sweep (vector-Jacobian product).
    pub fn custom<F>(&mut self, inputs: &[Var], forward: F) -> Result<Var>
    where
        F: FnOnce(&[&Tensor]) -> Result<(Tensor, Vec<Jacobian>)>,
    {
        let values: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
        let (out, jacs) = forward(&values)?;
        if jacs.len() != inputs.len() {
            return Err(Error::dim("custom", &[inputs.len()], &[jacs.len()]));
        }
        let out_n = out.numel();
        for (jac, input) in jacs.iter().zip(&values) {
            let in_n = input.numel();
            match jac {
                Jacobian::Dense(j) => {
                    if j.len() != out_n * in_n {
                        return Err(Error::dim("custom jacobian", &[out_n, in_n], &[j.len()]));
                    }
                }
                Jacobian::RowBlocks {
                    rows,
                    out_cols,
                    in_cols,
                    blocks,
                } => {
                    if rows * out_cols != out_n
                        || rows * in_cols != in_n
                        || blocks.len() != rows * out_cols * in_cols
                    {
                        return Err(Error::dim(
                            "custom jacobian",
                            &[out_n, in_n],
                            &[*rows, *out_cols, *in_cols],
                        ));
                    }
                }
                Jacobian::Zero => {}
            }
        }
        let ids: Vec<usize> = inputs.iter().map(|v| v.0).collect();
        let rg = self.rg(&ids);
        Ok(self.push(out, Op::Custom(ids, jacs), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.backprop_node(id, &g, &mut grads);
            grads[id] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            requires: self.nodes.iter().map(|n| n.requires_grad).collect(),
        })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], id: usize) -> Option<&'g mut [f64]> {
        if !self.nodes[id].requires_grad {
            return None;
        }
        let numel = self.nodes[id].value.numel();
        Some(grads[id].get_or_insert_with(|| vec![0.0; numel]).as_mut_slice())
    }

    fn backprop_node(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let ta = &self.nodes[a].value;
                let tb = &self.nodes[b].value;
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let nn = tb.shape()[1];
                if let Some(ga) = self.slot(grads, a) {
                    // dA = dC · Bᵀ
                    gemm(m, nn, k, g, Layout::N, tb.data(), Layout::T, 1.0, ga);
                }
                if let Some(gb) = self.slot(grads, b) {
                    // dB = Aᵀ · dC
                    gemm(k, m, nn, ta.data(), Layout::T, g, Layout::N, 1.0, gb);
                }
            }
            &Op::Transpose(a) => {
                let (r, c) = (self.nodes[a].value.shape()[0], self.nodes[a].value.shape()[1]);
                if let Some(ga) = self.slot(grads, a) {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            &Op::Add(a, b, bc) | &Op::Sub(a, b, bc) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(ga) = self.slot(grads, a) {
                    match bc {
                        Bcast::LhsScalar => ga[0] += g.iter().sum::<f64>(),
                        _ => ga.iter_mut().zip(g).for_each(|(o, &v)| *o += v),
                    }
                }
                if let Some(gb) = self.slot(grads, b) {
                    match bc {
                        Bcast::RhsScalar => gb[0] += sign * g.iter().sum::<f64>(),
                        _ => gb.iter_mut().zip(g).for_each(|(o, &v)| *o += sign * v),
                    }
                }
            }
            &Op::Mul(a, b) => {
                let va = self.nodes[a].value.data();
                let vb = self.nodes[b].value.data();
                if let Some(ga) = self.slot(grads, a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * vb[i];
                    }
                }
                if let Some(gb) = self.slot(grads, b) {
                    for i in 0..g.len() {
                        gb[i] += g[i] * va[i];
                    }
                }
            }
            &Op::AddBias(x, bias) => {
                let d = self.nodes[bias].value.numel();
                if let Some(gx) = self.slot(grads, x) {
                    gx.iter_mut().zip(g).for_each(|(o, &v)| *o += v);
                }
                if let Some(gb) = self.slot(grads, bias) {
                    for row in g.chunks(d) {
                        gb.iter_mut().zip(row).for_each(|(o, &v)| *o += v);
                    }
                }
            }
            &Op::Scale(x, c) => {
                if let Some(gx) = self.slot(grads, x) {
                    gx.iter_mut().zip(g).for_each(|(o, &v)| *o += c * v);
                }
            }
            &Op::AddConst(x) | &Op::Reshape(x) => {
                if let Some(gx) = self.slot(grads, x) {
                    gx.iter_mut().zip(g).for_each(|(o, &v)| *o += v);
                }
            }
            &Op::Tanh(x) => {
                let y = node.value.data();
                if let Some(gx) = self.slot(grads, x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                }
            }
            &Op::Gelu(x) => {
                let xv = self.nodes[x].value.data();
                if let Some(gx) = self.slot(grads, x) {
                    for i in 0..g.len() {
                        gx[i] += g[i] * gelu_grad_scalar(xv[i]);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let d = self.nodes[gain].value.numel();
                let gv = self.nodes[gain].value.data();
                if let Some(gg) = self.slot(grads, gain) {
                    for (grow, hrow) in g.chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            gg[j] += grow[j] * hrow[j];
                        }
                    }
                }
                if let Some(gb) = self.slot(grads, bias) {
                    for grow in g.chunks(d) {
                        gb.iter_mut().zip(grow).for_each(|(o, &v)| *o += v);
                    }
                }
                if let Some(gx) = self.slot(grads, x) {
                    let mut dh = vec![0.0; d];
                    for (r, &is) in inv_std.iter().enumerate() {
                        let grow = &g[r * d..(r + 1) * d];
                        let hrow = &xhat[r * d..(r + 1) * d];
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for j in 0..d {
                            dh[j] = grow[j] * gv[j];
                            mean_dh += dh[j];
                            mean_dh_h += dh[j] * hrow[j];
                        }
                        mean_dh /= d as f64;
                        mean_dh_h /= d as f64;
                        let out = &mut gx[r * d..(r + 1) * d];
                        for j in 0..d {
                            out[j] += is * (dh[j] - mean_dh - hrow[j] * mean_dh_h);
                        }
                    }
                }
            }
            &Op::Softmax(x) => {
                let y = node.value.data();
                let k = node.value.last_dim();
                if let Some(gx) = self.slot(grads, x) {
                    for ((grow, yrow), out) in g.chunks(k).zip(y.chunks(k)).zip(gx.chunks_mut(k)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for j in 0..k {
                            out[j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                }
            }
            &Op::SliceRows(x, start) => {
                let c = node.value.last_dim();
                if let Some(gx) = self.slot(grads, x) {
                    let dst = &mut gx[start * c..start * c + g.len()];
                    dst.iter_mut().zip(g).for_each(|(o, &v)| *o += v);
                }
            }
            &Op::SliceCols(x, start) => {
                let len = node.value.last_dim();
                let c = self.nodes[x].value.last_dim();
                if let Some(gx) = self.slot(grads, x) {
                    for (i, grow) in g.chunks(len).enumerate() {
                        let dst = &mut gx[i * c + start..i * c + start + len];
                        dst.iter_mut().zip(grow).for_each(|(o, &v)| *o += v);
                    }
                }
            }
            Op::GatherRows(x, rows) => {
                let c = node.value.last_dim();
                if let Some(gx) = self.slot(grads, *x) {
                    for (k, &r) in rows.iter().enumerate() {
                        let dst = &mut gx[r * c..(r + 1) * c];
                        dst.iter_mut()
                            .zip(&g[k * c..(k + 1) * c])
                            .for_each(|(o, &v)| *o += v);
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.nodes[p].value.numel();
                    if let Some(gp) = self.slot(grads, p) {
                        gp.iter_mut()
                            .zip(&g[off..off + len])
                            .for_each(|(o, &v)| *o += v);
                    }
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let c = node.value.last_dim();
                let rows = node.value.shape()[0];
                let mut off = 0;
                for &p in parts {
                    let w = self.nodes[p].value.last_dim();
                    if let Some(gp) = self.slot(grads, p) {
                        for i in 0..rows {
                            let src = &g[i * c + off..i * c + off + w];
                            gp[i * w..(i + 1) * w]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(o, &v)| *o += v);
                        }
                    }
                    off += w;
                }
            }
            &Op::Sum(x) => {
                if let Some(gx) = self.slot(grads, x) {
                    gx.iter_mut().for_each(|o| *o += g[0]);
                }
            }
            &Op::Mean(x) => {
                let n = self.nodes[x].value.numel() as f64;
                if let Some(gx) = self.slot(grads, x) {
                    gx.iter_mut().for_each(|o| *o += g[0] / n);
                }
            }
            Op::Custom(inputs, jacs) => {
                for (&inp, jac) in inputs.iter().zip(jacs) {
                    let in_n = self.nodes[inp].value.numel();
                    let Some(gi) = self.slot(grads, inp) else {
                        continue;
                    };
                    match jac {
                        Jacobian::Dense(j) => {
                            for (o, &go) in g.iter().enumerate() {
                                let jrow = &j[o * in_n..(o + 1) * in_n];
                                for i in 0..in_n {
                                    gi[i] += jrow[i] * go;
                                }
                            }
                        }
                        Jacobian::RowBlocks {
                            rows,
                            out_cols,
                            in_cols,
                            blocks,
                        } => {
                            let bs = out_cols * in_cols;
                            for r in 0..*rows {
                                let block = &blocks[r * bs..(r + 1) * bs];
                                let grow = &g[r * out_cols..(r + 1) * out_cols];
                                let dst = &mut gi[r * in_cols..(r + 1) * in_cols];
                                for (o, &go) in grow.iter().enumerate() {
                                    for i in 0..*in_cols {
                                        dst[i] += block[o * in_cols + i] * go;
                                    }
                                }
                            }
                        }
                        Jacobian::Zero => {}
                    }
                }
            }
        }
    }
}
