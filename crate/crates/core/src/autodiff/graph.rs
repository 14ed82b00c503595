//! Reverse-mode tape over [`Tensor`]s.
//!
//! A [`Graph`] records every op of one forward pass together with its value.
//! [`Graph::backward`] walks the tape in reverse and returns gradients for
//! the parameters that were read through [`Graph::param`].

use super::params::{Grads, ParamStore};
use super::tensor::{gemm_nn, gemm_tn, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

type LossFn<T> = Box<dyn FnOnce(&Tensor<T>) -> (T, Tensor<T>)>;

enum Op<T> {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulBT(Var, Var),
    /// Second operand may be a single row broadcast over the first.
    Add(Var, Var),
    Scale(Var, T),
    Relu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        /// Normalized input and reciprocal std per row, kept for backward.
        xhat: Tensor<T>,
        inv_std: Vec<T>,
    },
    SoftmaxRows(Var),
    /// Column-wise max over consecutive groups of rows.
    MaxPoolSets {
        x: Var,
        argmax: Vec<usize>,
    },
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    /// Scalar computed by a closure that also returned its input gradient.
    Loss(Var, Tensor<T>),
}

struct Node<T> {
    op: Op<T>,
    /// `None` for parameters, which are read from the store.
    value: Option<Tensor<T>>,
}

pub struct Graph<'p, T: Real> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("only parameters have no stored value"),
        }
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.value(v).shape()
    }

    /// Constant input; receives no gradient.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Leaf, t)
    }

    pub fn param(&mut self, id: usize) -> Var {
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param_named(&mut self, name: &str) -> Result<Var> {
        let id = self
            .params
            .id(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))?;
        Ok(self.param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out = ta
            .matmul(tb)
            .map_err(|_| mismatch("matmul", &ta.shape(), &tb.shape()))?;
        Ok(self.push(Op::MatMul(a, b), out))
    }

    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() {
            return Err(mismatch("matmul_bt", &ta.shape(), &tb.shape()));
        }
        let out = ta.matmul(&tb.transpose())?;
        Ok(self.push(Op::MatMulBT(a, b), out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let broadcast = tb.rows() == 1 && ta.rows() != 1;
        if ta.cols() != tb.cols() || !(broadcast || ta.rows() == tb.rows()) {
            return Err(mismatch("add", &ta.shape(), &tb.shape()));
        }
        let mut out = ta.clone();
        if broadcast {
            for r in 0..out.rows() {
                for (y, &x) in out.row_mut(r).iter_mut().zip(tb.data()) {
                    *y += x;
                }
            }
        } else {
            out.add_assign(tb);
        }
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(Op::Relu(a), out)
    }

    /// Row-wise layer normalization with learned `1×C` scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let c = tx.cols();
        if tg.shape() != [1, c] || tb.shape() != [1, c] {
            return Err(mismatch("layer_norm", &tx.shape(), &tg.shape()));
        }
        let n = T::of(c as f64);
        let mut xhat = Tensor::zeros(tx.rows(), c);
        let mut inv_std = Vec::with_capacity(tx.rows());
        let mut out = Tensor::zeros(tx.rows(), c);
        for r in 0..tx.rows() {
            let row = tx.row(r);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat.set(r, j, h);
                out.set(r, j, h * tg.data()[j] + tb.data()[j]);
            }
        }
        Ok(self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            out,
        ))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let mut out = ta.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut s = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v = *v / s;
            }
        }
        self.push(Op::SoftmaxRows(a), out)
    }

    /// Max over each group of `set` consecutive rows, per column. Ties go to
    /// the lowest row.
    pub fn max_pool_sets(&mut self, x: Var, set: usize) -> Result<Var> {
        let tx = self.value(x);
        if set == 0 || tx.rows() % set != 0 {
            return Err(mismatch("max_pool_sets", &tx.shape(), &[set]));
        }
        let groups = tx.rows() / set;
        let c = tx.cols();
        let mut out = Tensor::zeros(groups, c);
        let mut argmax = vec![0; groups * c];
        for g in 0..groups {
            let base = g * set;
            let o = out.row_mut(g);
            o.copy_from_slice(tx.row(base));
            let am = &mut argmax[g * c..(g + 1) * c];
            am.iter_mut().for_each(|a| *a = base);
            for r in base + 1..base + set {
                for (j, &v) in tx.row(r).iter().enumerate() {
                    if v > o[j] {
                        o[j] = v;
                        am[j] = r;
                    }
                }
            }
        }
        Ok(self.push(Op::MaxPoolSets { x, argmax }, out))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(mismatch("concat_cols", &self.shape(parts[0]), &self.shape(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), out))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= ta.rows()) {
            return Err(mismatch("gather_rows", &ta.shape(), &[bad]));
        }
        let mut out = Tensor::zeros(idx.len(), ta.cols());
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(ta.row(i));
        }
        Ok(self.push(Op::GatherRows(a, idx.to_vec()), out))
    }

    /// Scalar node whose value and input gradient come from `f`.
    pub fn custom_loss(&mut self, a: Var, f: LossFn<T>) -> Result<Var> {
        let ta = self.value(a);
        let (value, grad) = f(ta);
        if grad.shape() != ta.shape() {
            return Err(mismatch("custom_loss", &ta.shape(), &grad.shape()));
        }
        Ok(self.push(Op::Loss(a, grad), Tensor::scalar(value)))
    }

    /// Gradients of the `1×1` node `out` with respect to every parameter.
    pub fn backward(&self, out: Var) -> Result<Grads<T>> {
        let shape = self.shape(out);
        if shape != [1, 1] {
            return Err(mismatch("backward", &shape, &[1, 1]));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Tensor::scalar(T::one()));
        let mut pgrads = self.params.zeros_like();

        fn acc<T: Real>(slot: &mut Option<Tensor<T>>, shape: (usize, usize)) -> &mut Tensor<T> {
            slot.get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
        }

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let dims = |v: Var| {
                let t = self.value(v);
                (t.rows(), t.cols())
            };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Param(id) => pgrads.tensors[*id].add_assign(&g),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (r, k, c) = (ta.rows(), ta.cols(), tb.cols());
                    let bt = tb.transpose();
                    gemm_nn(g.data(), bt.data(), acc(&mut grads[a.0], (r, k)).data_mut(), r, c, k);
                    gemm_tn(ta.data(), g.data(), acc(&mut grads[b.0], (k, c)).data_mut(), r, k, c);
                }
                Op::MatMulBT(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (r, k, c) = (ta.rows(), ta.cols(), tb.rows());
                    gemm_nn(g.data(), tb.data(), acc(&mut grads[a.0], (r, k)).data_mut(), r, c, k);
                    gemm_tn(g.data(), ta.data(), acc(&mut grads[b.0], (c, k)).data_mut(), r, c, k);
                }
                Op::Add(a, b) => {
                    acc(&mut grads[a.0], dims(*a)).add_assign(&g);
                    let db = acc(&mut grads[b.0], dims(*b));
                    if db.rows() == g.rows() {
                        db.add_assign(&g);
                    } else {
                        for r in 0..g.rows() {
                            for (y, &x) in db.data_mut().iter_mut().zip(g.row(r)) {
                                *y += x;
                            }
                        }
                    }
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    let da = acc(&mut grads[a.0], dims(*a));
                    for (y, &x) in da.data_mut().iter_mut().zip(g.data()) {
                        *y += x * s;
                    }
                }
                Op::Relu(a) => {
                    let ta = self.value(*a);
                    let da = acc(&mut grads[a.0], dims(*a));
                    for ((y, &x), &gv) in da.data_mut().iter_mut().zip(ta.data()).zip(g.data()) {
                        if x > T::zero() {
                            *y += gv;
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let tg = self.value(*gamma);
                    let c = xhat.cols();
                    let n = T::of(c as f64);
                    {
                        let dg = acc(&mut grads[gamma.0], (1, c));
                        for r in 0..g.rows() {
                            for j in 0..c {
                                dg.data_mut()[j] += g.at(r, j) * xhat.at(r, j);
                            }
                        }
                    }
                    {
                        let db = acc(&mut grads[beta.0], (1, c));
                        for r in 0..g.rows() {
                            for (y, &x) in db.data_mut().iter_mut().zip(g.row(r)) {
                                *y += x;
                            }
                        }
                    }
                    let dx = acc(&mut grads[x.0], (xhat.rows(), c));
                    let mut dxh = vec![T::zero(); c];
                    for r in 0..g.rows() {
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..c {
                            dxh[j] = g.at(r, j) * tg.data()[j];
                            m1 += dxh[j];
                            m2 += dxh[j] * xhat.at(r, j);
                        }
                        m1 = m1 / n;
                        m2 = m2 / n;
                        let row = dx.row_mut(r);
                        for j in 0..c {
                            row[j] += inv_std[r] * (dxh[j] - m1 - xhat.at(r, j) * m2);
                        }
                    }
                }
                Op::SoftmaxRows(a) => {
                    let y = self.nodes[i].value.as_ref().expect("stored");
                    let da = acc(&mut grads[a.0], dims(*a));
                    for r in 0..y.rows() {
                        let dot: T = y.row(r).iter().zip(g.row(r)).map(|(&p, &q)| p * q).sum();
                        for ((d, &p), &q) in da.row_mut(r).iter_mut().zip(y.row(r)).zip(g.row(r)) {
                            *d += p * (q - dot);
                        }
                    }
                }
                Op::MaxPoolSets { x, argmax } => {
                    let c = g.cols();
                    let dx = acc(&mut grads[x.0], dims(*x));
                    for (k, &src) in argmax.iter().enumerate() {
                        let j = k % c;
                        let v = dx.at(src, j) + g.data()[k];
                        dx.set(src, j, v);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let (rows, cols) = dims(*p);
                        let dp = acc(&mut grads[p.0], (rows, cols));
                        for r in 0..rows {
                            for (y, &x) in dp.row_mut(r).iter_mut().zip(&g.row(r)[off..off + cols]) {
                                *y += x;
                            }
                        }
                        off += cols;
                    }
                }
                Op::GatherRows(a, idx) => {
                    let da = acc(&mut grads[a.0], dims(*a));
                    for (r, &src) in idx.iter().enumerate() {
                        for (y, &x) in da.row_mut(src).iter_mut().zip(g.row(r)) {
                            *y += x;
                        }
                    }
                }
                Op::Loss(a, local) => {
                    let up = g.data()[0];
                    let da = acc(&mut grads[a.0], dims(*a));
                    for (y, &x) in da.data_mut().iter_mut().zip(local.data()) {
                        *y += up * x;
                    }
                }
            }
        }
        Ok(pgrads)
    }
}
