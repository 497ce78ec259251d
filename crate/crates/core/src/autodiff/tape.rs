//! Reverse-mode automatic differentiation over rank-2 tensors.
//!
//! Operations are recorded in evaluation order, so the node list is already
//! topologically sorted and [`Tape::gradients`] walks it backwards once.

use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>, usize),
    Sum(Var, usize),
    Mean(Var, usize),
    Sigmoid(Var),
    Relu(Var),
    Sqrt(Var),
    Softmax(Var, usize),
    LayerNorm { x: Var, gain: Var, bias: Var, normed: Vec<f64>, inv_std: Vec<f64> },
    Transpose(Var),
    Reshape(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    CrossEntropy(Var, usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Record of a forward computation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch { op, left: a.shape().to_vec(), right: b.shape().to_vec() }
}

fn check_rank2(op: &'static str, t: &Tensor) -> Result<()> {
    if t.rank() == 2 {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { op, left: t.shape().to_vec(), right: vec![] })
    }
}

fn check_axis(op: &'static str, axis: usize, t: &Tensor) -> Result<()> {
    if axis < 2 {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { op, left: t.shape().to_vec(), right: vec![axis] })
    }
}

// Groups of flat indices reduced together: rows for axis 1, columns for axis 0.
fn lanes(rows: usize, cols: usize, axis: usize) -> (usize, usize, usize, usize) {
    // (lane count, lane length, lane stride, element stride)
    if axis == 1 {
        (rows, cols, cols, 1)
    } else {
        (cols, rows, 1, cols)
    }
}

fn broadcast_ok(a: &Tensor, b: &Tensor) -> bool {
    a.shape() == b.shape() || (b.rank() == 2 && a.rank() == 2 && b.rows() == 1 && b.cols() == a.cols())
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    fn zip_broadcast(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !broadcast_ok(ta, tb) {
            return Err(mismatch(op, ta, tb));
        }
        let cols = ta.cols();
        let mut out = ta.clone();
        let bd = tb.data();
        let full = tb.len() == ta.len();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            let bv = if full { bd[i] } else { bd[i % cols] };
            *o = f(*o, bv);
        }
        Ok(out)
    }

    /// `a + b`, where `b` may be a single row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_broadcast("add", a, b, |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_broadcast("sub", a, b, |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("mul", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|v| v * c);
        self.push(value, Op::Scale(a, c))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.value(*parts.first().ok_or_else(|| Error::invalid("concat of nothing"))?);
        check_axis("concat", axis, first)?;
        check_rank2("concat", first)?;
        let (rows0, cols0) = (first.rows(), first.cols());
        for p in parts {
            let t = self.value(*p);
            check_rank2("concat", t)?;
            if (axis == 0 && t.cols() != cols0) || (axis == 1 && t.rows() != rows0) {
                return Err(mismatch("concat", first, t));
            }
        }
        let value = if axis == 0 {
            let rows: usize = parts.iter().map(|p| self.value(*p).rows()).sum();
            let mut data = Vec::with_capacity(rows * cols0);
            for p in parts {
                data.extend_from_slice(self.value(*p).data());
            }
            Tensor::matrix(rows, cols0, data)
        } else {
            let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
            let mut data = Vec::with_capacity(rows0 * cols);
            for r in 0..rows0 {
                for p in parts {
                    let t = self.value(*p);
                    data.extend_from_slice(&t.data()[r * t.cols()..(r + 1) * t.cols()]);
                }
            }
            Tensor::matrix(rows0, cols, data)
        };
        Ok(self.push(value, Op::Concat(parts.to_vec(), axis)))
    }

    fn reduce(&self, a: Var, axis: usize, op: &'static str) -> Result<Tensor> {
        let t = self.value(a);
        check_rank2(op, t)?;
        check_axis(op, axis, t)?;
        let (r, c) = (t.rows(), t.cols());
        let (count, len, lane_stride, elem_stride) = lanes(r, c, axis);
        let mut out = Vec::with_capacity(count);
        for l in 0..count {
            let mut s = 0.0;
            for k in 0..len {
                s += t.data()[l * lane_stride + k * elem_stride];
            }
            out.push(s);
        }
        Ok(if axis == 0 { Tensor::matrix(1, c, out) } else { Tensor::matrix(r, 1, out) })
    }

    /// Sum along `axis` (0: over rows, giving `1 x cols`; 1: over columns, giving `rows x 1`).
    pub fn sum(&mut self, a: Var, axis: usize) -> Result<Var> {
        let value = self.reduce(a, axis, "sum")?;
        Ok(self.push(value, Op::Sum(a, axis)))
    }

    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        let n = if axis == 0 { t.rows() } else { t.cols() };
        let value = self.reduce(a, axis, "mean")?.map(|v| v / n as f64);
        Ok(self.push(value, Op::Mean(a, axis)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        self.push(value, Op::Sqrt(a))
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        check_rank2("softmax", t)?;
        check_axis("softmax", axis, t)?;
        let mut out = t.clone();
        let (count, len, ls, es) = lanes(t.rows(), t.cols(), axis);
        let data = out.data_mut();
        for l in 0..count {
            let idx = |k: usize| l * ls + k * es;
            let max = (0..len).map(|k| data[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..len {
                let e = (data[idx(k)] - max).exp();
                data[idx(k)] = e;
                total += e;
            }
            for k in 0..len {
                data[idx(k)] /= total;
            }
        }
        Ok(self.push(out, Op::Softmax(a, axis)))
    }

    /// Row-wise layer normalization with learnable `1 x cols` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        check_rank2("layer_norm", tx)?;
        let (r, c) = (tx.rows(), tx.cols());
        if tg.shape() != [1, c] {
            return Err(mismatch("layer_norm", tx, tg));
        }
        if tb.shape() != [1, c] {
            return Err(mismatch("layer_norm", tx, tb));
        }
        let mut normed = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &tx.data()[i * c..(i + 1) * c];
            let (mean, var) = mean_var(row);
            let s = 1.0 / (var + eps).sqrt();
            inv_std[i] = s;
            for j in 0..c {
                let n = (row[j] - mean) * s;
                normed[i * c + j] = n;
                out[i * c + j] = n * tg.data()[j] + tb.data()[j];
            }
        }
        let value = Tensor::matrix(r, c, out);
        Ok(self.push(value, Op::LayerNorm { x, gain, bias, normed, inv_std }))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        check_rank2("transpose", self.value(a))?;
        let value = self.value(a).transpose();
        Ok(self.push(value, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        check_rank2("slice_cols", t)?;
        if start + len > t.cols() {
            return Err(Error::ShapeMismatch { op: "slice_cols", left: t.shape().to_vec(), right: vec![start, len] });
        }
        let (r, c) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&t.data()[i * c + start..i * c + start + len]);
        }
        let value = Tensor::matrix(r, len, data);
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        check_rank2("slice_rows", t)?;
        if start + len > t.rows() {
            return Err(Error::ShapeMismatch { op: "slice_rows", left: t.shape().to_vec(), right: vec![start, len] });
        }
        let c = t.cols();
        let value = Tensor::matrix(len, c, t.data()[start * c..(start + len) * c].to_vec());
        Ok(self.push(value, Op::SliceRows(a, start)))
    }

    /// `-log softmax(logits)[label]` for a single row of logits, via log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.rank() != 2 || t.rows() != 1 {
            return Err(Error::ShapeMismatch { op: "cross_entropy", left: t.shape().to_vec(), right: vec![1] });
        }
        if label >= t.cols() {
            return Err(Error::LabelOutOfRange { label, classes: t.cols() });
        }
        let loss = log_sum_exp(t.data()) - t.data()[label];
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy(logits, label)))
    }

    /// Gradient of the scalar `loss` with respect to every recorded node.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(lt.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Runs [`gradients`](Self::gradients) and adds each parameter's gradient into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (i, node) in self.nodes.iter().enumerate().take(grads.grads.len()) {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[i]) {
                store.get_mut(*id).grad.add_assign(g);
            }
        }
        Ok(())
    }

    /// Adds each parameter's gradient into a flat buffer laid out by `offsets`.
    pub fn backward_flat(&self, loss: Var, offsets: &[usize], flat: &mut [f64]) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (i, node) in self.nodes.iter().enumerate().take(grads.grads.len()) {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[i]) {
                let o = offsets[id.index()];
                for (dst, v) in flat[o..o + g.len()].iter_mut().zip(g.data()) {
                    *dst += v;
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = g.matmul(&tb.transpose()).expect("matmul grad");
                let gb = ta.transpose().matmul(g).expect("matmul grad");
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                accumulate(grads, *a, g.clone());
                let tb = self.value(*b);
                let gb = if tb.len() == g.len() {
                    g.map(|v| sign * v)
                } else {
                    let c = g.cols();
                    let mut s = vec![0.0; c];
                    for (k, v) in g.data().iter().enumerate() {
                        s[k % c] += sign * v;
                    }
                    Tensor::new(tb.shape().to_vec(), s).expect("broadcast grad")
                };
                accumulate(grads, *b, gb);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = zip(g, tb, |x, y| x * y);
                let gb = zip(g, ta, |x, y| x * y);
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Scale(a, c) => accumulate(grads, *a, g.map(|v| v * c)),
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for p in parts {
                    let t = self.value(*p);
                    let (r, c) = (t.rows(), t.cols());
                    let mut part = Vec::with_capacity(r * c);
                    if *axis == 0 {
                        part.extend_from_slice(&g.data()[offset * c..(offset + r) * c]);
                        offset += r;
                    } else {
                        let gc = g.cols();
                        for row in 0..r {
                            part.extend_from_slice(&g.data()[row * gc + offset..row * gc + offset + c]);
                        }
                        offset += c;
                    }
                    accumulate(grads, *p, Tensor::new(t.shape().to_vec(), part).expect("concat grad"));
                }
            }
            Op::Sum(a, axis) | Op::Mean(a, axis) => {
                let t = self.value(*a);
                let (r, c) = (t.rows(), t.cols());
                let scale = match node.op {
                    Op::Mean(..) => 1.0 / if *axis == 0 { r } else { c } as f64,
                    _ => 1.0,
                };
                let mut ga = Tensor::zeros(t.shape());
                for row in 0..r {
                    for col in 0..c {
                        let gv = if *axis == 0 { g.data()[col] } else { g.data()[row] };
                        ga.data_mut()[row * c + col] = gv * scale;
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => accumulate(grads, *a, zip(g, out, |gv, s| gv * s * (1.0 - s))),
            Op::Relu(a) => {
                let ta = self.value(*a);
                accumulate(grads, *a, zip(g, ta, |gv, x| if x > 0.0 { gv } else { 0.0 }));
            }
            Op::Sqrt(a) => accumulate(grads, *a, zip(g, out, |gv, s| if s > 0.0 { gv / (2.0 * s) } else { 0.0 })),
            Op::Softmax(a, axis) => {
                let (count, len, ls, es) = lanes(out.rows(), out.cols(), *axis);
                let mut ga = Tensor::zeros(out.shape());
                for l in 0..count {
                    let idx = |k: usize| l * ls + k * es;
                    let dot: f64 = (0..len).map(|k| g.data()[idx(k)] * out.data()[idx(k)]).sum();
                    for k in 0..len {
                        ga.data_mut()[idx(k)] = out.data()[idx(k)] * (g.data()[idx(k)] - dot);
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::LayerNorm { x, gain, bias, normed, inv_std } => {
                let tg = self.value(*gain);
                let (r, c) = (out.rows(), out.cols());
                let mut gx = vec![0.0; r * c];
                let mut gg = vec![0.0; c];
                let mut gbias = vec![0.0; c];
                #[allow(clippy::needless_range_loop)]
                for row in 0..r {
                    let mut sum_d = 0.0;
                    let mut sum_dn = 0.0;
                    for col in 0..c {
                        let k = row * c + col;
                        let gv = g.data()[k];
                        gg[col] += gv * normed[k];
                        gbias[col] += gv;
                        let d = gv * tg.data()[col];
                        sum_d += d;
                        sum_dn += d * normed[k];
                    }
                    for col in 0..c {
                        let k = row * c + col;
                        let d = g.data()[k] * tg.data()[col];
                        gx[k] = inv_std[row] / c as f64 * (c as f64 * d - sum_d - normed[k] * sum_dn);
                    }
                }
                accumulate(grads, *x, Tensor::matrix(r, c, gx));
                accumulate(grads, *gain, Tensor::matrix(1, c, gg));
                accumulate(grads, *bias, Tensor::matrix(1, c, gbias));
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                accumulate(grads, *a, g.reshaped(&shape).expect("reshape grad"));
            }
            Op::SliceCols(a, start) => {
                let t = self.value(*a);
                let (r, c, len) = (t.rows(), t.cols(), out.cols());
                let mut ga = Tensor::zeros(t.shape());
                for row in 0..r {
                    ga.data_mut()[row * c + start..row * c + start + len]
                        .copy_from_slice(&g.data()[row * len..(row + 1) * len]);
                }
                accumulate(grads, *a, ga);
            }
            Op::SliceRows(a, start) => {
                let t = self.value(*a);
                let c = t.cols();
                let mut ga = Tensor::zeros(t.shape());
                ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                accumulate(grads, *a, ga);
            }
            Op::CrossEntropy(logits, label) => {
                let t = self.value(*logits);
                let lse = log_sum_exp(t.data());
                let gv = g.data()[0];
                let data = t
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| gv * ((v - lse).exp() - if k == *label { 1.0 } else { 0.0 }))
                    .collect();
                accumulate(grads, *logits, Tensor::new(t.shape().to_vec(), data).expect("ce grad"));
            }
        }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Gradients of a loss with respect to every node of a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of `v`, or `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Population mean and variance, two-pass.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}
