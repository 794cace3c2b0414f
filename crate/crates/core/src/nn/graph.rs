//! A define-by-run tape for reverse-mode differentiation over [`Tensor2`].
//!
//! Every op records its inputs and whatever it needs for the backward pass;
//! [`Graph::backward`] walks the tape in reverse accumulating gradients.
//! Parameters enter through [`Graph::param`] and their gradients are read
//! back with [`Graph::param_grads`].

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::kernels::{self, Padding};
use crate::nn::{ParamId, ParamStore, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor2,
        inv_std: Vec<f64>,
    },
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Im2Col { x: Var, width: usize, padding: Padding },
    MaxPool { x: Var, argmax: Vec<usize> },
    Mse { pred: Var, target: Tensor2 },
    Mean(Var),
}

struct Node {
    value: Tensor2,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    grads: Vec<Option<Tensor2>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor2, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    /// The single value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).get(0, 0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Binds a parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.push(out, Op::MatMulNT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds a 1×c row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ra, ca) = self.value(a).shape();
        let r = self.value(row);
        if r.shape() != (1, ca) {
            return Err(Error::Shape(format!(
                "broadcast add of {}x{} onto {ra}x{ca}",
                r.rows(),
                r.cols()
            )));
        }
        let mut out = self.value(a).clone();
        let bias = r.row(0).to_vec();
        for i in 0..ra {
            for (v, b) in out.row_mut(i).iter_mut().zip(&bias) {
                *v += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(kernels::sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    /// Row-wise softmax. With `causal`, row `i` only attends to columns `..=i`.
    pub fn softmax(&mut self, a: Var, causal: bool) -> Var {
        let out = kernels::softmax_rows(self.value(a), causal);
        self.push(out, Op::Softmax(a))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, epsilon: f64) -> Result<Var> {
        let cols = self.value(x).cols();
        for (name, p) in [("gamma", gamma), ("beta", beta)] {
            if self.value(p).shape() != (1, cols) {
                return Err(Error::Shape(format!("layer norm {name} must be 1x{cols}")));
            }
        }
        let (out, xhat, inv_std) = kernels::layer_norm_rows(
            self.value(x),
            self.value(gamma).row(0),
            self.value(beta).row(0),
            epsilon,
        );
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(x);
        if len == 0 || start + len > src.cols() {
            return Err(Error::Shape(format!(
                "columns {start}..{} of {} ",
                start + len,
                src.cols()
            )));
        }
        let mut out = Tensor2::zeros(src.rows(), len);
        for r in 0..src.rows() {
            out.row_mut(r).copy_from_slice(&src.row(r)[start..start + len]);
        }
        Ok(self.push(out, Op::SliceCols { x, start }))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(x);
        if len == 0 || start + len > src.rows() {
            return Err(Error::Shape(format!(
                "rows {start}..{} of {}",
                start + len,
                src.rows()
            )));
        }
        let cols = src.cols();
        let out = Tensor2::from_vec(len, cols, src.data()[start * cols..(start + len) * cols].to_vec())?;
        Ok(self.push(out, Op::SliceRows { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.value(p).rows())
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::Shape("column concat with differing row counts".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor2::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[c0..c0 + src.len()].copy_from_slice(src);
                c0 += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts
            .first()
            .map(|&p| self.value(p).cols())
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        if parts.iter().any(|&p| self.value(p).cols() != cols) {
            return Err(Error::Shape("row concat with differing column counts".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rows = data.len() / cols;
        let out = Tensor2::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Unfolds a sequence for convolution (see [`kernels::im2col`]).
    pub fn im2col(&mut self, x: Var, width: usize, padding: Padding) -> Result<Var> {
        kernels::check_odd("kernel width", width)?;
        let out = kernels::im2col(self.value(x), width, padding);
        Ok(self.push(out, Op::Im2Col { x, width, padding }))
    }

    pub fn max_pool(&mut self, x: Var, range: usize, padding: Padding) -> Result<Var> {
        kernels::check_odd("pool range", range)?;
        let (out, argmax) = kernels::max_pool(self.value(x), range, padding);
        Ok(self.push(out, Op::MaxPool { x, argmax }))
    }

    /// Mean squared error against a constant target; 1×1.
    pub fn mse(&mut self, pred: Var, target: Tensor2) -> Result<Var> {
        let p = self.value(pred);
        p.same_shape(&target, "mse target")?;
        let n = p.len() as f64;
        let loss = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        Ok(self.push(Tensor2::filled(1, 1, loss), Op::Mse { pred, target }))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.sum() / v.len() as f64;
        self.push(Tensor2::filled(1, 1, m), Op::Mean(x))
    }

    fn acc(&mut self, v: Var, g: Tensor2) {
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Back-propagates from a 1×1 `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Shape("backward needs a scalar loss".into()));
        }
        if !self.value(loss).is_finite() {
            return Err(Error::Numeric("loss".into()));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Tensor2::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            // keep the gradient readable after the sweep
            self.grads[i] = Some(g.clone());
            let node = &self.nodes[i];
            let y = &node.value;
            let mut pending: Vec<(Var, Tensor2)> = Vec::with_capacity(2);
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    pending.push((*a, g.matmul_nt(bv)?));
                    pending.push((*b, av.matmul_tn(&g)?));
                }
                Op::MatMulNT(a, b) => {
                    // y = a bᵀ: da = g b, db = gᵀ a
                    let (av, bv) = (self.value(*a), self.value(*b));
                    pending.push((*a, g.matmul(bv)?));
                    pending.push((*b, g.matmul_tn(av)?));
                }
                Op::Add(a, b) => {
                    pending.push((*a, g.clone()));
                    pending.push((*b, g));
                }
                Op::AddRow(a, row) => {
                    let mut gr = Tensor2::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (acc, v) in gr.row_mut(0).iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    pending.push((*a, g));
                    pending.push((*row, gr));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    pending.push((*a, g.zip_map(bv, |g, b| g * b)?));
                    pending.push((*b, g.zip_map(av, |g, a| g * a)?));
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    pending.push((*a, g.map(|v| v * s)));
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    pending.push((*a, g.zip_map(x, |g, x| if x > 0.0 { g } else { 0.0 })?));
                }
                Op::Sigmoid(a) => {
                    pending.push((*a, g.zip_map(y, |g, s| g * s * (1.0 - s))?));
                }
                Op::Tanh(a) => {
                    pending.push((*a, g.zip_map(y, |g, t| g * (1.0 - t * t))?));
                }
                Op::Softmax(a) => {
                    let mut dx = Tensor2::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                            *d = yr[c] * (gr[c] - dot);
                        }
                    }
                    pending.push((*a, dx));
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gam = self.value(*gamma).row(0);
                    let (rows, cols) = xhat.shape();
                    let n = cols as f64;
                    let mut dx = Tensor2::zeros(rows, cols);
                    let mut dgamma = Tensor2::zeros(1, cols);
                    let mut dbeta = Tensor2::zeros(1, cols);
                    for r in 0..rows {
                        let (gr, hr) = (g.row(r), xhat.row(r));
                        let dh: Vec<f64> = gr.iter().zip(gam).map(|(g, gm)| g * gm).collect();
                        let sum_dh: f64 = dh.iter().sum();
                        let sum_dh_h: f64 = dh.iter().zip(hr).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            dx.set(r, c, inv_std[r] / n * (n * dh[c] - sum_dh - hr[c] * sum_dh_h));
                        }
                        for c in 0..cols {
                            dgamma.row_mut(0)[c] += gr[c] * hr[c];
                            dbeta.row_mut(0)[c] += gr[c];
                        }
                    }
                    pending.push((*x, dx));
                    pending.push((*gamma, dgamma));
                    pending.push((*beta, dbeta));
                }
                Op::SliceCols { x, start } => {
                    let src = self.value(*x);
                    let mut dx = Tensor2::zeros(src.rows(), src.cols());
                    for r in 0..g.rows() {
                        dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    pending.push((*x, dx));
                }
                Op::SliceRows { x, start } => {
                    let src = self.value(*x);
                    let mut dx = Tensor2::zeros(src.rows(), src.cols());
                    let cols = src.cols();
                    dx.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                    pending.push((*x, dx));
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for &p in parts {
                        let (rows, cols) = self.value(p).shape();
                        let mut dp = Tensor2::zeros(rows, cols);
                        for r in 0..rows {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + cols]);
                        }
                        c0 += cols;
                        pending.push((p, dp));
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = self.value(p).shape();
                        let dp = Tensor2::from_vec(rows, cols, g.data()[offset..offset + rows * cols].to_vec())?;
                        offset += rows * cols;
                        pending.push((p, dp));
                    }
                }
                Op::Im2Col { x, width, padding } => {
                    let (len, ch) = self.value(*x).shape();
                    let mut dx = Tensor2::zeros(len, ch);
                    for t in 0..len {
                        for k in 0..*width {
                            if let Some(src) = kernels::conv_source(t, k, *width, len, *padding) {
                                let gsrc = &g.row(t)[k * ch..(k + 1) * ch];
                                for (d, v) in dx.row_mut(src).iter_mut().zip(gsrc) {
                                    *d += v;
                                }
                            }
                        }
                    }
                    pending.push((*x, dx));
                }
                Op::MaxPool { x, argmax } => {
                    let (len, ch) = self.value(*x).shape();
                    let mut dx = Tensor2::zeros(len, ch);
                    for t in 0..len {
                        for c in 0..ch {
                            let src = argmax[t * ch + c];
                            let cur = dx.get(src, c);
                            dx.set(src, c, cur + g.get(t, c));
                        }
                    }
                    pending.push((*x, dx));
                }
                Op::Mse { pred, target } => {
                    let p = self.value(*pred);
                    let scale = 2.0 * g.get(0, 0) / p.len() as f64;
                    pending.push((*pred, p.zip_map(target, |a, b| scale * (a - b))?));
                }
                Op::Mean(x) => {
                    let v = self.value(*x);
                    let s = g.get(0, 0) / v.len() as f64;
                    pending.push((*x, Tensor2::filled(v.rows(), v.cols(), s)));
                }
            }
            for (v, dv) in pending {
                self.acc(v, dv);
            }
        }
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `v`, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor2> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Parameter gradients from the last backward pass, ordered by id.
    pub fn param_grads(&self) -> Vec<(ParamId, Tensor2)> {
        let mut out: Vec<(ParamId, Tensor2)> = self
            .params
            .iter()
            .filter_map(|(&id, &v)| self.grad(v).map(|g| (id, g.clone())))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }

    /// Adds this graph's parameter gradients into `store`.
    pub fn accumulate_into(&self, store: &mut ParamStore) -> Result<()> {
        for (id, g) in self.param_grads() {
            store.accumulate_grad(id, &g)?;
        }
        Ok(())
    }
}
