//! Tape-based reverse-mode differentiation.
//!
//! Values are computed eagerly as nodes are appended, so the tape is always in
//! topological order. The backward pass emits its own nodes onto the same
//! tape, which makes every gradient itself differentiable; the gradient
//! penalty relies on this to differentiate an input-gradient norm with respect
//! to critic parameters.

use std::collections::HashMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    Leaf,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale(f64),
    AddScalar(f64),
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Relu,
    Square,
    Sqrt,
    /// Row-wise softmax.
    Softmax,
    /// Sum of all entries to a `1 x 1` scalar.
    Sum,
    /// `[r, c] -> [1, c]`
    SumRows,
    /// `[r, c] -> [r, 1]`
    SumCols,
    /// `[1, c] -> [rows, c]`
    BroadcastRows(usize),
    /// `[r, 1] -> [r, cols]`
    BroadcastCols(usize),
    /// `[1, 1] -> [rows, cols]`
    BroadcastScalar(usize, usize),
    ConcatCols,
    SliceCols {
        start: usize,
        end: usize,
    },
    /// Zero-pads columns so the input lands at `start` in a row of `width`.
    PadCols {
        start: usize,
        width: usize,
    },
}

#[derive(Debug)]
struct Node {
    op: OpKind,
    inputs: Vec<Var>,
    value: Tensor,
    requires_grad: bool,
}

/// Gradients of a scalar root with respect to every grad-requiring leaf.
#[derive(Debug, Default)]
pub struct Gradients {
    by_leaf: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, leaf: Var) -> Option<&Tensor> {
        self.by_leaf.get(&leaf)
    }

    pub fn len(&self) -> usize {
        self.by_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_leaf.is_empty()
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
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

    pub fn op(&self, v: Var) -> &OpKind {
        &self.nodes[v.0].op
    }

    pub fn inputs(&self, v: Var) -> &[Var] {
        &self.nodes[v.0].inputs
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t, true)
    }

    /// Leaf that does not receive gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.push(OpKind::Leaf, Vec::new(), t, requires_grad)
    }

    /// The forward value of `root`. Values are computed on construction, so
    /// this only checks the result is finite.
    pub fn forward(&self, root: Var) -> Result<&Tensor> {
        let v = self.value(root);
        if !v.is_finite() {
            return Err(Error::training(format!(
                "non-finite value at node {} ({:?})",
                root.0, self.nodes[root.0].op
            )));
        }
        Ok(v)
    }

    fn push(&mut self, op: OpKind, inputs: Vec<Var>, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            inputs,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, op: OpKind, inputs: Vec<Var>, value: Tensor) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(op, inputs, value, rg)
    }

    fn unary(&mut self, op: OpKind, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        self.derived(op, vec![a], value)
    }

    fn binary(&mut self, op: OpKind, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), name, f)?;
        Ok(self.derived(op, vec![a, b], value))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.derived(OpKind::MatMul, vec![a, b], value))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.derived(OpKind::Transpose, vec![a], value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(OpKind::Add, "add", a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(OpKind::Sub, "sub", a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(OpKind::Mul, "mul", a, b, |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(OpKind::Div, "div", a, b, |x, y| x / y)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(OpKind::Neg, a, |x| -x)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(OpKind::Scale(c), a, move |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(OpKind::AddScalar(c), a, move |x| x + c)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(OpKind::Exp, a, f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(OpKind::Log, a, f64::ln)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(OpKind::Tanh, a, f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(OpKind::Sigmoid, a, sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(OpKind::Relu, a, |x| x.max(0.0))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(OpKind::Square, a, |x| x * x)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(OpKind::Sqrt, a, f64::sqrt)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        self.derived(OpKind::Softmax, vec![a], value)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.derived(OpKind::Sum, vec![a], value)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let [r, c] = t.dims();
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, &v) in out.iter_mut().zip(t.row_slice(i)) {
                *o += v;
            }
        }
        let value = Tensor::row(out);
        self.derived(OpKind::SumRows, vec![a], value)
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let r = t.rows();
        let out: Vec<f64> = (0..r).map(|i| t.row_slice(i).iter().sum()).collect();
        let value = Tensor::matrix(r, 1, out).expect("positive dims");
        self.derived(OpKind::SumCols, vec![a], value)
    }

    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rows() != 1 || rows == 0 {
            return Err(Error::Shape {
                op: "broadcast_rows",
                left: t.shape().to_vec(),
                right: vec![rows, t.cols()],
            });
        }
        let c = t.cols();
        let mut out = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            out.extend_from_slice(t.data());
        }
        let value = Tensor::matrix(rows, c, out)?;
        Ok(self.derived(OpKind::BroadcastRows(rows), vec![a], value))
    }

    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Result<Var> {
        let t = self.value(a);
        if t.cols() != 1 || cols == 0 {
            return Err(Error::Shape {
                op: "broadcast_cols",
                left: t.shape().to_vec(),
                right: vec![t.rows(), cols],
            });
        }
        let r = t.rows();
        let mut out = Vec::with_capacity(r * cols);
        for &v in t.data() {
            out.extend(std::iter::repeat_n(v, cols));
        }
        let value = Tensor::matrix(r, cols, out)?;
        Ok(self.derived(OpKind::BroadcastCols(cols), vec![a], value))
    }

    pub fn broadcast_scalar(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let t = self.value(a);
        if t.numel() != 1 || rows == 0 || cols == 0 {
            return Err(Error::Shape {
                op: "broadcast_scalar",
                left: t.shape().to_vec(),
                right: vec![rows, cols],
            });
        }
        let value = Tensor::full(rows, cols, t.item());
        Ok(self.derived(OpKind::BroadcastScalar(rows, cols), vec![a], value))
    }

    /// `a + bias` where `bias` is a `1 x c` row added to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let rows = self.value(a).rows();
        let b = self.broadcast_rows(bias, rows)?;
        self.add(a, b)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat_cols(&tensors)?;
        Ok(self.derived(OpKind::ConcatCols, parts.to_vec(), value))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let value = self.value(a).slice_cols(start, end)?;
        Ok(self.derived(OpKind::SliceCols { start, end }, vec![a], value))
    }

    pub fn pad_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let t = self.value(a);
        let [r, c] = t.dims();
        if start + c > width {
            return Err(Error::Shape {
                op: "pad_cols",
                left: t.shape().to_vec(),
                right: vec![r, width],
            });
        }
        let mut out = vec![0.0; r * width];
        for i in 0..r {
            out[i * width + start..i * width + start + c].copy_from_slice(t.row_slice(i));
        }
        let value = Tensor::matrix(r, width, out)?;
        Ok(self.derived(OpKind::PadCols { start, width }, vec![a], value))
    }

    /// Gradients of scalar `root` with respect to `wrt`, as nodes on this
    /// graph. The returned nodes can be differentiated again.
    pub fn grad(&mut self, root: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        let root_value = self.value(root);
        if root_value.numel() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar root, got shape {:?}",
                root_value.shape()
            )));
        }
        let [r, c] = root_value.dims();
        let n = root.0 + 1;
        let mut grads: Vec<Option<Var>> = vec![None; n];
        grads[root.0] = Some(self.constant(Tensor::ones(r, c)));
        for i in (0..n).rev() {
            let Some(g) = grads[i] else { continue };
            if !self.nodes[i].requires_grad || self.nodes[i].op == OpKind::Leaf {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let inputs = self.nodes[i].inputs.clone();
            let needs: Vec<bool> = inputs.iter().map(|v| self.nodes[v.0].requires_grad).collect();
            let contributions = self.vjp(&op, &inputs, &needs, Var(i), g)?;
            for (input, gi) in contributions {
                grads[input.0] = Some(match grads[input.0] {
                    None => gi,
                    Some(prev) => self.add(prev, gi)?,
                });
            }
        }
        wrt.iter()
            .map(|&w| match grads.get(w.0).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let [r, c] = self.value(w).dims();
                    Ok(self.constant(Tensor::zeros(r, c)))
                }
            })
            .collect()
    }

    /// Full backward pass: gradient tensors for every grad-requiring leaf.
    pub fn backward(&mut self, root: Var) -> Result<Gradients> {
        let leaves: Vec<Var> = (0..=root.0)
            .filter(|&i| self.nodes[i].op == OpKind::Leaf && self.nodes[i].requires_grad)
            .map(Var)
            .collect();
        let grads = self.grad(root, &leaves)?;
        let by_leaf = leaves
            .into_iter()
            .zip(grads)
            .map(|(leaf, g)| (leaf, self.value(g).clone()))
            .collect();
        Ok(Gradients { by_leaf })
    }

    /// Vector-Jacobian products for one node, expressed as graph ops.
    fn vjp(&mut self, op: &OpKind, inputs: &[Var], needs: &[bool], out: Var, g: Var) -> Result<Vec<(Var, Var)>> {
        let mut res = Vec::with_capacity(inputs.len());
        match *op {
            OpKind::Leaf => {}
            OpKind::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                if needs[0] {
                    let bt = self.transpose(b);
                    res.push((a, self.matmul(g, bt)?));
                }
                if needs[1] {
                    let at = self.transpose(a);
                    res.push((b, self.matmul(at, g)?));
                }
            }
            OpKind::Transpose => res.push((inputs[0], self.transpose(g))),
            OpKind::Add => {
                for (i, &inp) in inputs.iter().enumerate() {
                    if needs[i] {
                        res.push((inp, g));
                    }
                }
            }
            OpKind::Sub => {
                if needs[0] {
                    res.push((inputs[0], g));
                }
                if needs[1] {
                    res.push((inputs[1], self.neg(g)));
                }
            }
            OpKind::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                if needs[0] {
                    res.push((a, self.mul(g, b)?));
                }
                if needs[1] {
                    res.push((b, self.mul(g, a)?));
                }
            }
            OpKind::Div => {
                let (a, b) = (inputs[0], inputs[1]);
                if needs[0] {
                    res.push((a, self.div(g, b)?));
                }
                if needs[1] {
                    let gy = self.mul(g, out)?;
                    let q = self.div(gy, b)?;
                    res.push((b, self.neg(q)));
                }
            }
            OpKind::Neg => res.push((inputs[0], self.neg(g))),
            OpKind::Scale(c) => res.push((inputs[0], self.scale(g, c))),
            OpKind::AddScalar(_) => res.push((inputs[0], g)),
            OpKind::Exp => res.push((inputs[0], self.mul(g, out)?)),
            OpKind::Log => res.push((inputs[0], self.div(g, inputs[0])?)),
            OpKind::Tanh => {
                // g * (1 - y^2)
                let y2 = self.square(out);
                let one_minus = self.neg(y2);
                let one_minus = self.add_scalar(one_minus, 1.0);
                res.push((inputs[0], self.mul(g, one_minus)?));
            }
            OpKind::Sigmoid => {
                // g * y * (1 - y)
                let ny = self.neg(out);
                let one_minus = self.add_scalar(ny, 1.0);
                let d = self.mul(out, one_minus)?;
                res.push((inputs[0], self.mul(g, d)?));
            }
            OpKind::Relu => {
                let mask = self.value(inputs[0]).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                let mask = self.constant(mask);
                res.push((inputs[0], self.mul(g, mask)?));
            }
            OpKind::Square => {
                let ga = self.mul(g, inputs[0])?;
                res.push((inputs[0], self.scale(ga, 2.0)));
            }
            OpKind::Sqrt => {
                let two_y = self.scale(out, 2.0);
                res.push((inputs[0], self.div(g, two_y)?));
            }
            OpKind::Softmax => {
                // y * (g - rowsum(g * y))
                let gy = self.mul(g, out)?;
                let s = self.sum_cols(gy);
                let cols = self.value(out).cols();
                let sb = self.broadcast_cols(s, cols)?;
                let centered = self.sub(g, sb)?;
                res.push((inputs[0], self.mul(out, centered)?));
            }
            OpKind::Sum => {
                let [r, c] = self.value(inputs[0]).dims();
                res.push((inputs[0], self.broadcast_scalar(g, r, c)?));
            }
            OpKind::SumRows => {
                let r = self.value(inputs[0]).rows();
                res.push((inputs[0], self.broadcast_rows(g, r)?));
            }
            OpKind::SumCols => {
                let c = self.value(inputs[0]).cols();
                res.push((inputs[0], self.broadcast_cols(g, c)?));
            }
            OpKind::BroadcastRows(_) => res.push((inputs[0], self.sum_rows(g))),
            OpKind::BroadcastCols(_) => res.push((inputs[0], self.sum_cols(g))),
            OpKind::BroadcastScalar(..) => res.push((inputs[0], self.sum(g))),
            OpKind::ConcatCols => {
                let mut offset = 0;
                for (i, &inp) in inputs.iter().enumerate() {
                    let w = self.value(inp).cols();
                    if needs[i] {
                        res.push((inp, self.slice_cols(g, offset, offset + w)?));
                    }
                    offset += w;
                }
            }
            OpKind::SliceCols { start, .. } => {
                let width = self.value(inputs[0]).cols();
                res.push((inputs[0], self.pad_cols(g, start, width)?));
            }
            OpKind::PadCols { start, .. } => {
                let w = self.value(inputs[0]).cols();
                res.push((inputs[0], self.slice_cols(g, start, start + w)?));
            }
        }
        Ok(res)
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

/// Row-wise numerically stable softmax.
pub fn softmax_rows(t: &Tensor) -> Tensor {
    let [r, c] = t.dims();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let row = t.row_slice(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        for o in &mut out[start..] {
            *o /= total;
        }
    }
    Tensor::matrix(r, c, out).expect("same dims as input")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap());
        let b = g.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[11.0]);
    }

    #[test]
    fn relu_and_softmax_values() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(vec![-1.0, 0.0, 2.0]));
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = g.constant(Tensor::row(vec![0.0; 3]));
        let s = g.softmax(z);
        for &v in g.value(s).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_error_names_op_and_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(2, 3));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row(vec![1.0, 2.0]));
        let sq = g.square(x);
        let root = g.sum(sq);
        let grads = g.backward(root).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn mean_gradient_is_uniform() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row(vec![3.0, -1.0, 7.0, 0.5]));
        let root = g.mean(x);
        let grads = g.backward(root).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.25; 4]);
    }

    #[test]
    fn fan_out_accumulates() {
        // y = x * x + x  => dy/dx = 2x + 1
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let xx = g.mul(x, x).unwrap();
        let y = g.add(xx, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 7.0);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn second_derivative_of_cube() {
        // f = x^3, f' = 3x^2, f'' = 6x
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let x2 = g.square(x);
        let x3 = g.mul(x2, x).unwrap();
        let d1 = g.grad(x3, &[x]).unwrap()[0];
        assert!((g.value(d1).item() - 12.0).abs() < 1e-12);
        let d2 = g.grad(d1, &[x]).unwrap()[0];
        assert!((g.value(d2).item() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::scalar(2.0));
        let x = g.param(Tensor::scalar(5.0));
        let y = g.mul(c, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.len(), 1);
        assert_eq!(grads.get(x).unwrap().item(), 2.0);
    }
}
