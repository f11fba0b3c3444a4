//! Minimal tape-based reverse-mode differentiation over `(c, h, w)` tensors.
//!
//! A [`Graph`] records every operation in execution order, so the tape is
//! already topologically sorted and [`Graph::backward`] walks it in reverse.
//! Trainable values live in a [`ParamStore`]; parameter leaves copy their
//! values into the graph and the backward pass accumulates into the store's
//! gradient buffer.

pub mod conv;
mod gradcheck;
mod params;

use std::sync::Arc;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use params::{Init, ParamId, ParamStore};

use crate::error::{invalid, Error, Result};
use crate::stencil::DerivativeOperator;
use conv::ConvShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

/// `(channels, h, w)`; scalars are `(1, 1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const SCALAR: Shape = Shape { c: 1, h: 1, w: 1 };

    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn numel(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    Conv {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        shape: ConvShape,
    },
    Tanh(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    /// Multiply every channel by a fixed per-node coefficient plane.
    MulPlane(NodeId, Arc<Vec<f64>>),
    /// Scalar node times tensor.
    ScalarMul(NodeId, NodeId),
    Derivative(NodeId, Arc<DerivativeOperator>),
    Channel(NodeId, usize),
    Concat(Vec<NodeId>),
    /// Mean of `(x[k] - target)^2` over listed flat indices.
    MaskedMse {
        input: NodeId,
        indices: Arc<Vec<usize>>,
        targets: Arc<Vec<f64>>,
    },
    WeightedSum(Vec<(NodeId, f64)>),
    Sum(NodeId),
    Reshape(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    shape: Shape,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// One computation graph. Not shared across threads.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(ParamId, NodeId)>,
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

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].shape
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[0]
    }

    fn push(&mut self, shape: Shape, value: Vec<f64>, op: Op, requires_grad: bool) -> NodeId {
        debug_assert_eq!(shape.numel(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<Shape> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return invalid(format!("{what}: shape mismatch {sa:?} vs {sb:?}"));
        }
        Ok(sa)
    }

    pub fn constant(&mut self, shape: Shape, value: Vec<f64>) -> Result<NodeId> {
        if shape.numel() != value.len() {
            return invalid(format!(
                "constant of shape {shape:?} given {} values",
                value.len()
            ));
        }
        Ok(self.push(shape, value, Op::Constant, false))
    }

    /// Leaf for a stored parameter; each parameter gets at most one leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&(_, n)) = self.params.iter().find(|(p, _)| *p == id) {
            return n;
        }
        let dims = store.shape(id);
        let shape = match dims.len() {
            0 => Shape::SCALAR,
            1 => Shape::new(dims[0], 1, 1),
            _ => Shape::new(dims.iter().product(), 1, 1),
        };
        let n = self.push(shape, store.value(id).to_vec(), Op::Param(id), true);
        self.params.push((id, n));
        n
    }

    /// Dilated 3x3 convolution with zero padding equal to the dilation.
    pub fn conv2d(&mut self, input: NodeId, weight: NodeId, bias: NodeId, dilation: usize) -> Result<NodeId> {
        if dilation < 1 {
            return invalid("dilation must be at least 1");
        }
        let s = self.shape(input);
        let c_out = self.shape(bias).numel();
        if self.shape(weight).numel() != c_out * s.c * 9 {
            return invalid(format!(
                "conv weight has {} entries, expected {}x{}x3x3",
                self.shape(weight).numel(),
                c_out,
                s.c
            ));
        }
        let shape = ConvShape {
            c_in: s.c,
            c_out,
            h: s.h,
            w: s.w,
            dilation,
        };
        let mut out = vec![0.0; c_out * s.plane()];
        conv::forward(
            shape,
            self.value(input),
            self.value(weight),
            self.value(bias),
            &mut out,
        );
        let rg = self.rg(input) || self.rg(weight) || self.rg(bias);
        Ok(self.push(
            Shape::new(c_out, s.h, s.w),
            out,
            Op::Conv {
                input,
                weight,
                bias,
                shape,
            },
            rg,
        ))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).iter().map(|v| v.tanh()).collect();
        let rg = self.rg(x);
        self.push(self.shape(x), v, Op::Tanh(x), rg)
    }

    fn binary(&mut self, a: NodeId, b: NodeId, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<NodeId> {
        let shape = self.same_shape(a, b, what)?;
        let v = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, v, op, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> NodeId {
        let v = self.value(x).iter().map(|v| k * v).collect();
        let rg = self.rg(x);
        self.push(self.shape(x), v, Op::Scale(x, k), rg)
    }

    /// `x + c` for a constant of the same shape.
    pub fn add_const(&mut self, x: NodeId, c: Arc<Vec<f64>>) -> Result<NodeId> {
        let s = self.shape(x);
        if c.len() != s.numel() {
            return invalid("add_const: length mismatch");
        }
        let v = self.value(x).iter().zip(c.iter()).map(|(a, b)| a + b).collect();
        let rg = self.rg(x);
        Ok(self.push(s, v, Op::AddConst(x), rg))
    }

    /// Multiply each channel pointwise by a fixed `h x w` plane.
    pub fn mul_plane(&mut self, x: NodeId, plane: Arc<Vec<f64>>) -> Result<NodeId> {
        let s = self.shape(x);
        if plane.len() != s.plane() {
            return invalid("mul_plane: plane size mismatch");
        }
        let v = self
            .value(x)
            .chunks(s.plane())
            .flat_map(|ch| ch.iter().zip(plane.iter()).map(|(a, b)| a * b))
            .collect();
        let rg = self.rg(x);
        Ok(self.push(s, v, Op::MulPlane(x, plane), rg))
    }

    pub fn scalar_mul(&mut self, s: NodeId, x: NodeId) -> Result<NodeId> {
        if self.shape(s).numel() != 1 {
            return invalid("scalar_mul expects a scalar first operand");
        }
        let k = self.scalar(s);
        let v = self.value(x).iter().map(|v| k * v).collect();
        let rg = self.rg(s) || self.rg(x);
        Ok(self.push(self.shape(x), v, Op::ScalarMul(s, x), rg))
    }

    /// Apply a fixed finite-difference operator to every channel.
    pub fn derivative(&mut self, x: NodeId, op: Arc<DerivativeOperator>) -> NodeId {
        let s = self.shape(x);
        let mut out = vec![0.0; s.numel()];
        op.apply(self.value(x), &mut out, s.c);
        let rg = self.rg(x);
        self.push(s, out, Op::Derivative(x, op), rg)
    }

    pub fn channel(&mut self, x: NodeId, c: usize) -> Result<NodeId> {
        let s = self.shape(x);
        if c >= s.c {
            return invalid(format!("channel {c} out of range ({} channels)", s.c));
        }
        let v = self.value(x)[c * s.plane()..(c + 1) * s.plane()].to_vec();
        let rg = self.rg(x);
        Ok(self.push(Shape::new(1, s.h, s.w), v, Op::Channel(x, c), rg))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidInput("concat of nothing".into()))?;
        let s0 = self.shape(first);
        let mut c = 0;
        let mut v = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if (s.h, s.w) != (s0.h, s0.w) {
                return invalid("concat: spatial mismatch");
            }
            c += s.c;
            v.extend_from_slice(self.value(p));
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Shape::new(c, s0.h, s0.w), v, Op::Concat(parts.to_vec()), rg))
    }

    /// Mean squared deviation from `targets` over the listed flat indices.
    pub fn masked_mse(&mut self, x: NodeId, indices: Arc<Vec<usize>>, targets: Arc<Vec<f64>>) -> Result<NodeId> {
        if indices.len() != targets.len() {
            return invalid("masked_mse: indices and targets differ in length");
        }
        if indices.is_empty() {
            return invalid("masked_mse over an empty mask");
        }
        let xv = self.value(x);
        if let Some(&bad) = indices.iter().find(|&&k| k >= xv.len()) {
            return invalid(format!("masked_mse index {bad} out of range"));
        }
        let sum: f64 = indices
            .iter()
            .zip(targets.iter())
            .map(|(&k, &t)| (xv[k] - t) * (xv[k] - t))
            .sum();
        let v = vec![sum / indices.len() as f64];
        let rg = self.rg(x);
        Ok(self.push(
            Shape::SCALAR,
            v,
            Op::MaskedMse {
                input: x,
                indices,
                targets,
            },
            rg,
        ))
    }

    /// `sum_k w_k s_k` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId> {
        let mut total = 0.0;
        for &(n, w) in terms {
            if self.shape(n).numel() != 1 {
                return invalid("weighted_sum expects scalar terms");
            }
            total += w * self.scalar(n);
        }
        let rg = terms.iter().any(|&(n, _)| self.rg(n));
        Ok(self.push(Shape::SCALAR, vec![total], Op::WeightedSum(terms.to_vec()), rg))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = vec![self.value(x).iter().sum()];
        let rg = self.rg(x);
        self.push(Shape::SCALAR, v, Op::Sum(x), rg)
    }

    /// Same data viewed under another shape with equal element count.
    pub fn reshape(&mut self, x: NodeId, shape: Shape) -> Result<NodeId> {
        if shape.numel() != self.shape(x).numel() {
            return invalid(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape(x)
            ));
        }
        let v = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape, v, Op::Reshape(x), rg))
    }

    pub fn check_finite(&self, id: NodeId, what: &str) -> Result<()> {
        if self.value(id).iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numerical(format!("non-finite values in {what}")))
        }
    }

    /// Back-propagate from a scalar node, accumulating into `store` grads.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        if self.shape(loss).numel() != 1 {
            return invalid("backward requires a scalar loss");
        }
        store.count_backward();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
            grads[id.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(pid) => {
                    for (dst, v) in store.grad_mut(*pid).iter_mut().zip(&g) {
                        *dst += v;
                    }
                }
                Op::Conv {
                    input,
                    weight,
                    bias,
                    shape,
                } => {
                    let xin = &self.nodes[input.0].value;
                    let wv = &self.nodes[weight.0].value;
                    let mut gi = self.rg(*input).then(|| vec![0.0; xin.len()]);
                    let mut gw = self.rg(*weight).then(|| vec![0.0; wv.len()]);
                    let mut gb = self.rg(*bias).then(|| vec![0.0; shape.c_out]);
                    conv::backward(
                        *shape,
                        xin,
                        wv,
                        &g,
                        gi.as_deref_mut(),
                        gw.as_deref_mut(),
                        gb.as_deref_mut(),
                    );
                    for (id, part) in [(*input, gi), (*weight, gw), (*bias, gb)] {
                        if let Some(part) = part {
                            let dst = acc(&mut grads, id, part.len());
                            dst.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
                        }
                    }
                }
                Op::Tanh(x) => {
                    if self.rg(*x) {
                        let y = &node.value;
                        let dst = acc(&mut grads, *x, y.len());
                        for k in 0..y.len() {
                            dst[k] += g[k] * (1.0 - y[k] * y[k]);
                        }
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    if self.rg(*a) {
                        let dst = acc(&mut grads, *a, g.len());
                        dst.iter_mut().zip(&g).for_each(|(d, v)| *d += v);
                    }
                    if self.rg(*b) {
                        let dst = acc(&mut grads, *b, g.len());
                        dst.iter_mut().zip(&g).for_each(|(d, v)| *d += sign * v);
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        let bv = &self.nodes[b.0].value;
                        let dst = acc(&mut grads, *a, g.len());
                        for k in 0..g.len() {
                            dst[k] += g[k] * bv[k];
                        }
                    }
                    if self.rg(*b) {
                        let av = &self.nodes[a.0].value;
                        let dst = acc(&mut grads, *b, g.len());
                        for k in 0..g.len() {
                            dst[k] += g[k] * av[k];
                        }
                    }
                }
                Op::Scale(x, k) => {
                    if self.rg(*x) {
                        let dst = acc(&mut grads, *x, g.len());
                        dst.iter_mut().zip(&g).for_each(|(d, v)| *d += k * v);
                    }
                }
                Op::AddConst(x) => {
                    if self.rg(*x) {
                        let dst = acc(&mut grads, *x, g.len());
                        dst.iter_mut().zip(&g).for_each(|(d, v)| *d += v);
                    }
                }
                Op::MulPlane(x, plane) => {
                    if self.rg(*x) {
                        let dst = acc(&mut grads, *x, g.len());
                        let p = plane.len();
                        for (k, (d, v)) in dst.iter_mut().zip(&g).enumerate() {
                            *d += v * plane[k % p];
                        }
                    }
                }
                Op::ScalarMul(s, x) => {
                    if self.rg(*s) {
                        let xv = &self.nodes[x.0].value;
                        let dot: f64 = xv.iter().zip(&g).map(|(a, b)| a * b).sum();
                        acc(&mut grads, *s, 1)[0] += dot;
                    }
                    if self.rg(*x) {
                        let k = self.nodes[s.0].value[0];
                        let dst = acc(&mut grads, *x, g.len());
                        dst.iter_mut().zip(&g).for_each(|(d, v)| *d += k * v);
                    }
                }
                Op::Derivative(x, op) => {
                    if self.rg(*x) {
                        let c = node.shape.c;
                        let dst = acc(&mut grads, *x, g.len());
                        op.apply_transpose_add(&g, dst, c);
                    }
                }
                Op::Channel(x, c) => {
                    if self.rg(*x) {
                        let s = self.shape(*x);
                        let dst = acc(&mut grads, *x, s.numel());
                        let p = s.plane();
                        dst[c * p..(c + 1) * p]
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(d, v)| *d += v);
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.shape(p).numel();
                        if self.rg(p) {
                            let dst = acc(&mut grads, p, n);
                            dst.iter_mut()
                                .zip(&g[off..off + n])
                                .for_each(|(d, v)| *d += v);
                        }
                        off += n;
                    }
                }
                Op::MaskedMse {
                    input,
                    indices,
                    targets,
                } => {
                    if self.rg(*input) {
                        let xv = &self.nodes[input.0].value;
                        let scale = 2.0 * g[0] / indices.len() as f64;
                        let dst = acc(&mut grads, *input, xv.len());
                        for (&k, &t) in indices.iter().zip(targets.iter()) {
                            dst[k] += scale * (xv[k] - t);
                        }
                    }
                }
                Op::WeightedSum(terms) => {
                    for &(n, w) in terms {
                        if self.rg(n) {
                            acc(&mut grads, n, 1)[0] += w * g[0];
                        }
                    }
                }
                Op::Sum(x) => {
                    if self.rg(*x) {
                        let n = self.shape(*x).numel();
                        acc(&mut grads, *x, n).iter_mut().for_each(|d| *d += g[0]);
                    }
                }
                Op::Reshape(x) => {
                    if self.rg(*x) {
                        let dst = acc(&mut grads, *x, g.len());
                        dst.iter_mut().zip(&g).for_each(|(d, v)| *d += v);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldgrid::{Axis, Grid2D};
    use crate::stencil::PaddingSpec;

    fn fd_check(store: &mut ParamStore, f: impl Fn(&mut Graph, &ParamStore) -> NodeId) -> f64 {
        store.zero_grad();
        let mut g = Graph::new();
        let l = f(&mut g, store);
        g.backward(l, store).unwrap();
        let analytic = store.grads().to_vec();
        let mut worst: f64 = 0.0;
        for k in 0..store.len() {
            let h = 1e-5;
            let orig = store.values()[k];
            store.values_mut()[k] = orig + h;
            let mut gp = Graph::new();
            let lp = f(&mut gp, store);
            let fp = gp.scalar(lp);
            store.values_mut()[k] = orig - h;
            let mut gm = Graph::new();
            let lm = f(&mut gm, store);
            let fm = gm.scalar(lm);
            store.values_mut()[k] = orig;
            let num = (fp - fm) / (2.0 * h);
            let rel = (num - analytic[k]).abs() / num.abs().max(analytic[k].abs()).max(1e-8);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn linear_scalar_gradient() {
        let mut s = ParamStore::new(0);
        let theta = s.add_constant("theta", &[1], 0.3).unwrap();
        let mut g = Graph::new();
        let t = g.param(&s, theta);
        let x = g.constant(Shape::SCALAR, vec![2.5]).unwrap();
        let l = g.mul(t, x).unwrap();
        g.backward(l, &mut s).unwrap();
        assert_eq!(s.grad(theta), &[2.5]);
        // Accumulation: a second pass doubles the gradient.
        g.backward(l, &mut s).unwrap();
        assert_eq!(s.grad(theta), &[5.0]);
        assert_eq!(s.backward_passes(), 2);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut s = ParamStore::new(0);
        let w = s.add_constant("w", &[3], 1.0).unwrap();
        let mut g = Graph::new();
        let n = g.param(&s, w);
        assert!(matches!(g.backward(n, &mut s), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn unused_parameters_get_zero_grad() {
        let mut s = ParamStore::new(0);
        let a = s.add_constant("a", &[1], 1.0).unwrap();
        let b = s.add_constant("b", &[1], 1.0).unwrap();
        let mut g = Graph::new();
        let na = g.param(&s, a);
        let l = g.scale(na, 3.0);
        g.backward(l, &mut s).unwrap();
        assert_eq!(s.grad(b), &[0.0]);
        assert_eq!(s.grad(a), &[3.0]);
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut s = ParamStore::new(0);
        let w = s.add_constant("w", &[1, 1, 3, 3], 0.0).unwrap();
        s.value_mut(w)[4] = 1.0;
        let b = s.add_constant("b", &[1], 0.0).unwrap();
        let input: Vec<f64> = (0..35).map(|k| (k as f64 * 0.37).sin()).collect();
        for d in [1, 2, 4] {
            let mut g = Graph::new();
            let x = g.constant(Shape::new(1, 5, 7), input.clone()).unwrap();
            let (wn, bn) = (g.param(&s, w), g.param(&s, b));
            let y = g.conv2d(x, wn, bn, d).unwrap();
            assert_eq!(g.value(y), input.as_slice());
        }
    }

    #[test]
    fn conv_shape_mismatch_rejected() {
        let mut s = ParamStore::new(0);
        let w = s.add_constant("w", &[2, 3, 3, 3], 0.0).unwrap();
        let b = s.add_constant("b", &[2], 0.0).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Shape::new(1, 5, 5), vec![0.0; 25]).unwrap();
        let (wn, bn) = (g.param(&s, w), g.param(&s, b));
        assert!(g.conv2d(x, wn, bn, 1).is_err());
        assert!(g.conv2d(x, wn, bn, 0).is_err());
    }

    #[test]
    fn sum_of_output_weight_gradient_is_tap_sum() {
        let mut s = ParamStore::new(1);
        let w = s.add_uniform("w", &[1, 1, 3, 3], 0.5).unwrap();
        let b = s.add_constant("b", &[1], 0.0).unwrap();
        let input: Vec<f64> = (0..25).map(|k| 1.0 + k as f64).collect();
        let mut g = Graph::new();
        let x = g.constant(Shape::new(1, 5, 5), input.clone()).unwrap();
        let (wn, bn) = (g.param(&s, w), g.param(&s, b));
        let y = g.conv2d(x, wn, bn, 2).unwrap();
        let total = g.sum(y);
        g.backward(total, &mut s).unwrap();
        for ky in 0..3 {
            for kx in 0..3 {
                let (dy, dx) = ((ky as isize - 1) * 2, (kx as isize - 1) * 2);
                let mut want = 0.0;
                for yy in 0..5isize {
                    for xx in 0..5isize {
                        let (sy, sx) = (yy + dy, xx + dx);
                        if (0..5).contains(&sy) && (0..5).contains(&sx) {
                            want += input[(sy * 5 + sx) as usize];
                        }
                    }
                }
                assert!((s.grad(w)[ky * 3 + kx] - want).abs() < 1e-12);
            }
        }
        assert!((s.grad(b)[0] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn mse_of_conv_matches_finite_differences() {
        let mut s = ParamStore::new(11);
        let w = s.add_uniform("w", &[2, 1, 3, 3], 0.4).unwrap();
        let b = s.add_uniform("b", &[2], 0.4).unwrap();
        let input: Vec<f64> = (0..48).map(|k| ((k * 7 % 13) as f64 * 0.21).cos()).collect();
        let worst = fd_check(&mut s, |g, s| {
            let x = g.constant(Shape::new(1, 6, 8), input.clone()).unwrap();
            let (wn, bn) = (g.param(s, w), g.param(s, b));
            let y = g.conv2d(x, wn, bn, 2).unwrap();
            let n = g.shape(y).numel();
            g.masked_mse(y, Arc::new((0..n).collect()), Arc::new(vec![0.0; n]))
                .unwrap()
        });
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn tanh_chain_matches_finite_differences() {
        let mut s = ParamStore::new(5);
        let p = s.add_uniform("p", &[4], 1.0).unwrap();
        let worst = fd_check(&mut s, |g, s| {
            let x = g.param(s, p);
            let mut h = x;
            for k in 0..4 {
                h = g.tanh(h);
                h = g.scale(h, 1.5 + k as f64 * 0.1);
            }
            let h2 = g.mul(h, x).unwrap();
            g.masked_mse(h2, Arc::new(vec![0, 1, 2, 3]), Arc::new(vec![0.1; 4]))
                .unwrap()
        });
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn derivative_and_plane_ops_match_finite_differences() {
        let grid = Grid2D::cartesian(9, 10, 8.0, 9.0).unwrap();
        let d1 = Arc::new(
            DerivativeOperator::new(&grid, Axis::First, 2, 8, &PaddingSpec::for_accuracy(8)).unwrap(),
        );
        let d2 = Arc::new(
            DerivativeOperator::new(&grid, Axis::Second, 1, 4, &PaddingSpec::for_accuracy(4)).unwrap(),
        );
        let mut s = ParamStore::new(2);
        let u = s.add_uniform("u", &[2 * 90], 1.0).unwrap();
        let theta = s.add_constant("theta", &[1], 0.7).unwrap();
        let plane = Arc::new((0..90).map(|k| 1.0 + k as f64 / 90.0).collect::<Vec<_>>());
        let worst = fd_check(&mut s, |g, s| {
            let raw = g.param(s, u);
            let xr = g.reshape(raw, Shape::new(2, 9, 10)).unwrap();
            let t = g.param(s, theta);
            let a = g.derivative(xr, d1.clone());
            let b = g.derivative(xr, d2.clone());
            let ab = g.mul(a, b).unwrap();
            let c = g.mul_plane(ab, plane.clone()).unwrap();
            let c0 = g.channel(c, 1).unwrap();
            let c1 = g.channel(xr, 0).unwrap();
            let cat = g.concat(&[c0, c1]).unwrap();
            let sc = g.scalar_mul(t, cat).unwrap();
            let n = g.shape(sc).numel();
            g.masked_mse(sc, Arc::new((0..n).step_by(3).collect()), Arc::new(vec![0.5; n.div_ceil(3)]))
                .unwrap()
        });
        assert!(worst < 1e-5, "{worst}");
    }
}
