//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value and the indices
//! of its inputs. [`Tape::backward`] walks the nodes in reverse and
//! accumulates vector-Jacobian products. Parameters are bound by reference,
//! so building a tape never copies weights.

use crate::{NeuralError, ParamId, ParamSet, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    idx: usize,
    tape_id: u64,
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatVec(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Ln(usize),
    Square(usize),
    Softplus(usize),
    Clamp(usize, f64, f64),
    Sum(usize),
    Concat(Vec<usize>),
    Row(usize, usize),
    SoftmaxNll(usize, usize),
}

#[derive(Debug)]
enum Value {
    Param(ParamId),
    Owned(Tensor),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Value,
}

static NEXT_TAPE: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(1);

/// Recording of one forward pass.
#[derive(Debug)]
pub struct Tape<'p> {
    params: Option<&'p ParamSet>,
    nodes: Vec<Node>,
    id: u64,
}

/// Reverse-mode gradients, one slot per node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    tape_id: u64,
}

impl Gradients {
    /// Gradient with respect to `v`; `None` if `v` did not influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        if v.tape_id != self.tape_id {
            return None;
        }
        self.grads.get(v.idx).and_then(|g| g.as_deref())
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self {
            params: None,
            nodes: Vec::new(),
            id: NEXT_TAPE.fetch_add(1, std::sync::atomic::Ordering::Relaxed),
        }
    }

    /// A tape that can bind parameters from `params` without copying.
    pub fn with_params(params: &'p ParamSet) -> Self {
        let mut t = Self::new();
        t.params = Some(params);
        t
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node {
            op,
            value: Value::Owned(value),
        });
        Var {
            idx: self.nodes.len() - 1,
            tape_id: self.id,
        }
    }

    fn raw(&self, idx: usize) -> &Tensor {
        match &self.nodes[idx].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.params.expect("param bound without a set").get(*id),
        }
    }

    fn check(&self, v: Var) -> Result<usize, NeuralError> {
        if v.tape_id != self.id || v.idx >= self.nodes.len() {
            return Err(NeuralError::GraphNotRecorded);
        }
        Ok(v.idx)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.raw(v.idx)
    }

    /// Records a constant input (no gradient is propagated further).
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Input, t)
    }

    /// Binds a parameter by reference.
    pub fn param(&mut self, id: ParamId) -> Var {
        assert!(self.params.is_some(), "Tape::param needs Tape::with_params");
        self.nodes.push(Node {
            op: Op::Param(id),
            value: Value::Param(id),
        });
        Var {
            idx: self.nodes.len() - 1,
            tape_id: self.id,
        }
    }

    /// Binds every parameter of the attached set, in order.
    pub fn bind_all(&mut self) -> Vec<Var> {
        let n = self.params.map_or(0, ParamSet::len);
        (0..n).map(|i| self.param(ParamId(i))).collect()
    }

    fn same_shape(&self, op: &'static str, a: usize, b: usize) -> Result<(), NeuralError> {
        let (sa, sb) = (self.raw(a).shape(), self.raw(b).shape());
        if self.raw(a).len() != self.raw(b).len() {
            return Err(NeuralError::ShapeMismatch {
                op,
                expected: sa.to_vec(),
                got: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var, NeuralError> {
        let ia = self.check(a)?;
        let t = self.raw(ia);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())?;
        Ok(self.push(op, out))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var, NeuralError> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        self.same_shape(name, ia, ib)?;
        let (ta, tb) = (self.raw(ia), self.raw(ib));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(op, out))
    }

    /// `w · x` for a `[m, n]` matrix and an `n`-vector.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, NeuralError> {
        let (iw, ix) = (self.check(w)?, self.check(x)?);
        let (tw, tx) = (self.raw(iw), self.raw(ix));
        let (m, n) = tw.dims2().ok_or_else(|| NeuralError::ShapeMismatch {
            op: "matvec",
            expected: vec![0, 0],
            got: tw.shape().to_vec(),
        })?;
        if tx.len() != n {
            return Err(NeuralError::ShapeMismatch {
                op: "matvec",
                expected: vec![n],
                got: tx.shape().to_vec(),
            });
        }
        let (wd, xd) = (tw.data(), tx.data());
        let out: Vec<f64> = (0..m).map(|r| wd[r * n..(r + 1) * n].iter().zip(xd).map(|(a, b)| a * b).sum()).collect();
        Ok(self.push(Op::MatVec(iw, ix), Tensor::vector(out)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (ia, ib) = (a.idx, b.idx);
        self.binary(a, b, "add", Op::Add(ia, ib), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (ia, ib) = (a.idx, b.idx);
        self.binary(a, b, "sub", Op::Sub(ia, ib), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (ia, ib) = (a.idx, b.idx);
        self.binary(a, b, "mul", Op::Mul(ia, ib), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, NeuralError> {
        self.unary(a, Op::Scale(a.idx, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var, NeuralError> {
        self.unary(a, Op::AddScalar(a.idx), |x| x + c)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var, NeuralError> {
        let neg = self.scale(a, -1.0)?;
        self.add_scalar(neg, 1.0)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NeuralError> {
        self.unary(a, Op::Tanh(a.idx), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NeuralError> {
        self.unary(a, Op::Sigmoid(a.idx), sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NeuralError> {
        self.unary(a, Op::Exp(a.idx), f64::exp)
    }

    pub fn ln(&mut self, a: Var) -> Result<Var, NeuralError> {
        self.unary(a, Op::Ln(a.idx), f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Result<Var, NeuralError> {
        self.unary(a, Op::Square(a.idx), |x| x * x)
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var, NeuralError> {
        self.unary(a, Op::Softplus(a.idx), softplus)
    }

    /// Elementwise clamp; the gradient is zero where the bound is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, NeuralError> {
        self.unary(a, Op::Clamp(a.idx, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NeuralError> {
        let ia = self.check(a)?;
        let s = self.raw(ia).data().iter().sum();
        Ok(self.push(Op::Sum(ia), Tensor::scalar(s)))
    }

    /// Flat concatenation of vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NeuralError> {
        let mut idx = Vec::with_capacity(parts.len());
        let mut data = Vec::new();
        for &p in parts {
            let i = self.check(p)?;
            data.extend_from_slice(self.raw(i).data());
            idx.push(i);
        }
        Ok(self.push(Op::Concat(idx), Tensor::vector(data)))
    }

    /// Row `row` of a rank-2 tensor (embedding lookup).
    pub fn row(&mut self, m: Var, row: usize) -> Result<Var, NeuralError> {
        let im = self.check(m)?;
        let t = self.raw(im);
        let (r, c) = t.dims2().ok_or_else(|| NeuralError::ShapeMismatch {
            op: "row",
            expected: vec![0, 0],
            got: t.shape().to_vec(),
        })?;
        if row >= r {
            return Err(NeuralError::ShapeMismatch {
                op: "row",
                expected: vec![r],
                got: vec![row],
            });
        }
        let data = t.data()[row * c..(row + 1) * c].to_vec();
        Ok(self.push(Op::Row(im, row), Tensor::vector(data)))
    }

    /// `-ln softmax(logits)[target]`, computed with the log-sum-exp shift.
    pub fn softmax_nll(&mut self, logits: Var, target: usize) -> Result<Var, NeuralError> {
        let il = self.check(logits)?;
        let t = self.raw(il);
        if target >= t.len() {
            return Err(NeuralError::ShapeMismatch {
                op: "softmax_nll",
                expected: vec![t.len()],
                got: vec![target],
            });
        }
        let lse = log_sum_exp(t.data());
        let nll = lse - t.data()[target];
        Ok(self.push(Op::SoftmaxNll(il, target), Tensor::scalar(nll)))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NeuralError> {
        let il = self.check(loss)?;
        if self.raw(il).len() != 1 {
            return Err(NeuralError::ShapeMismatch {
                op: "backward",
                expected: vec![1],
                got: self.raw(il).shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[il] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], i: usize, len: usize) -> &mut Vec<f64> {
            grads[i].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=il).rev() {
            let Some(g) = grads[i].take() else { continue };
            let out = self.raw(i).data();
            match &self.nodes[i].op {
                Op::Input | Op::Param(_) => {}
                Op::MatVec(iw, ix) => {
                    let (tw, tx) = (self.raw(*iw), self.raw(*ix));
                    let (m, n) = tw.dims2().expect("checked at record time");
                    let (wd, xd) = (tw.data(), tx.data());
                    let gw = acc(&mut grads, *iw, m * n);
                    for r in 0..m {
                        let gr = g[r];
                        if gr != 0.0 {
                            for (c, xv) in xd.iter().enumerate() {
                                gw[r * n + c] += gr * xv;
                            }
                        }
                    }
                    let gx = acc(&mut grads, *ix, n);
                    for r in 0..m {
                        let gr = g[r];
                        if gr != 0.0 {
                            for c in 0..n {
                                gx[c] += wd[r * n + c] * gr;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    let n = g.len();
                    for (d, v) in acc(&mut grads, *a, n).iter_mut().zip(&g) {
                        *d += v;
                    }
                    for (d, v) in acc(&mut grads, *b, n).iter_mut().zip(&g) {
                        *d += v;
                    }
                }
                Op::Sub(a, b) => {
                    let n = g.len();
                    for (d, v) in acc(&mut grads, *a, n).iter_mut().zip(&g) {
                        *d += v;
                    }
                    for (d, v) in acc(&mut grads, *b, n).iter_mut().zip(&g) {
                        *d -= v;
                    }
                }
                Op::Mul(a, b) => {
                    let n = g.len();
                    let bd = self.raw(*b).data().to_vec();
                    let ad = self.raw(*a).data().to_vec();
                    for ((d, v), y) in acc(&mut grads, *a, n).iter_mut().zip(&g).zip(&bd) {
                        *d += v * y;
                    }
                    for ((d, v), x) in acc(&mut grads, *b, n).iter_mut().zip(&g).zip(&ad) {
                        *d += v * x;
                    }
                }
                Op::Scale(a, c) => {
                    for (d, v) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g) {
                        *d += c * v;
                    }
                }
                Op::AddScalar(a) => {
                    for (d, v) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g) {
                        *d += v;
                    }
                }
                Op::Tanh(a) => {
                    for ((d, v), y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(out) {
                        *d += v * (1.0 - y * y);
                    }
                }
                Op::Sigmoid(a) => {
                    for ((d, v), y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(out) {
                        *d += v * y * (1.0 - y);
                    }
                }
                Op::Exp(a) => {
                    for ((d, v), y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(out) {
                        *d += v * y;
                    }
                }
                Op::Ln(a) => {
                    let xs = self.raw(*a).data();
                    let gd = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        gd[k] += g[k] / xs[k];
                    }
                }
                Op::Square(a) => {
                    let xs = self.raw(*a).data();
                    let gd = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        gd[k] += 2.0 * xs[k] * g[k];
                    }
                }
                Op::Softplus(a) => {
                    let xs = self.raw(*a).data();
                    let gd = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        gd[k] += g[k] * sigmoid(xs[k]);
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    let xs = self.raw(*a).data();
                    let gd = acc(&mut grads, *a, g.len());
                    for k in 0..g.len() {
                        if xs[k] >= *lo && xs[k] <= *hi {
                            gd[k] += g[k];
                        }
                    }
                }
                Op::Sum(a) => {
                    let n = self.raw(*a).len();
                    for d in acc(&mut grads, *a, n).iter_mut() {
                        *d += g[0];
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.raw(p).len();
                        for (d, v) in acc(&mut grads, p, n).iter_mut().zip(&g[off..off + n]) {
                            *d += v;
                        }
                        off += n;
                    }
                }
                Op::Row(m, row) => {
                    let t = self.raw(*m);
                    let c = t.dims2().expect("checked at record time").1;
                    let gm = acc(&mut grads, *m, t.len());
                    for k in 0..c {
                        gm[row * c + k] += g[k];
                    }
                }
                Op::SoftmaxNll(l, target) => {
                    let xs = self.raw(*l).data();
                    let p = softmax(xs);
                    let gd = acc(&mut grads, *l, xs.len());
                    for k in 0..xs.len() {
                        let onehot = if k == *target { 1.0 } else { 0.0 };
                        gd[k] += g[0] * (p[k] - onehot);
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads, tape_id: self.id })
    }

    /// Collects gradients for the bound parameters into tensors shaped like
    /// the parameter set. Unused parameters get zeros.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<Tensor> {
        let params = self.params.expect("param_grads needs Tape::with_params");
        let mut out = params.zeros_like();
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[i]) {
                out[id.0].add_assign(g);
            }
        }
        out
    }
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Numerically shifted softmax.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::scalar(3.0));
        let y = tape.square(x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).unwrap(), &[6.0]);
    }

    #[test]
    fn foreign_var_is_rejected() {
        let mut a = Tape::new();
        let mut b = Tape::new();
        let x = a.input(Tensor::scalar(1.0));
        let _ = b.input(Tensor::scalar(1.0));
        assert!(matches!(b.backward(x), Err(NeuralError::GraphNotRecorded)));
    }

    #[test]
    fn softmax_is_normalized_and_positive() {
        let p = softmax(&[1000.0, -1000.0, 0.0, 3.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v >= 0.0));
        let q = softmax(&[0.1, 0.2, -0.3]);
        assert!(q.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn uniform_logits_nll_is_ln_v() {
        let mut tape = Tape::new();
        let l = tape.input(Tensor::vector(vec![0.0; 4]));
        let nll = tape.softmax_nll(l, 2).unwrap();
        assert!((tape.value(nll).data()[0] - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn matvec_shape_error() {
        let mut tape = Tape::new();
        let w = tape.input(Tensor::zeros(&[2, 3]));
        let x = tape.input(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.matvec(w, x), Err(NeuralError::ShapeMismatch { .. })));
    }

    #[test]
    fn shared_node_accumulates() {
        // y = x * x + x  => dy/dx = 2x + 1
        let mut tape = Tape::new();
        let x = tape.input(Tensor::scalar(2.0));
        let xx = tape.mul(x, x).unwrap();
        let y = tape.add(xx, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).unwrap(), &[5.0]);
    }
}
