//! Define-by-run tape.
//!
//! Every op appends a node holding its output value and enough context to
//! replay its backward rule. Nodes are only ever appended, so inputs always
//! precede outputs and a reverse sweep is a valid topological order.

use crate::error::{invalid_arg, Result};
use crate::rng::RngState;

use super::conv::{self, ConvGeom};
use super::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise op kinds accepted by [`Tape::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Exp,
    Log,
    Negate,
}

impl ElementwiseKind {
    pub fn is_binary(self) -> bool {
        matches!(self, Self::Add | Self::Sub | Self::Mul)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add { a: Var, b: Var, b_scalar: bool },
    Sub { a: Var, b: Var, b_scalar: bool },
    Mul { a: Var, b: Var, b_scalar: bool },
    Neg(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Scale { a: Var, factor: f64 },
    Offset(Var),
    Clamp { a: Var, lo: f64, hi: f64 },
    Conv2d { input: Var, kernel: Var, bias: Var, geom: ConvGeom },
    MaxPool2 { input: Var, argmax: Vec<usize> },
    Upsample { input: Var, factor: usize },
    Concat { inputs: Vec<Var>, axis: usize },
    Dropout { input: Var, mask: Vec<f64> },
    LogSumExp { input: Var, axis: usize },
    SumAxis { input: Var, axis: usize },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// `(outer, len, inner)` strides for reducing `shape` along `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
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

    /// Records a leaf. Its `requires_grad` flag decides whether backward fills its grad.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        self.push(tensor, Op::Leaf)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push_derived(&mut self, shape: &[usize], data: Vec<f64>, inputs: &[Var], op: Op) -> Var {
        let rg = inputs.iter().any(|&v| self.requires_grad(v));
        let t = Tensor::new(shape, data)
            .expect("op produced inconsistent shape")
            .with_requires_grad(rg);
        self.push(t, op)
    }

    fn map_unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let shape = t.shape().to_vec();
        let data = t.data().iter().map(|&x| f(x)).collect();
        self.push_derived(&shape, data, &[a], op)
    }

    /// Applies a pointwise op. Binary kinds accept `b` of equal shape or a single element.
    pub fn elementwise(&mut self, kind: ElementwiseKind, a: Var, b: Option<Var>) -> Result<Var> {
        if kind.is_binary() {
            let b = b.ok_or_else(|| invalid_arg!("{kind:?} needs a second operand"))?;
            let (sa, sb) = (self.shape(a), self.shape(b));
            let b_scalar = if sa == sb {
                false
            } else if self.value(b).numel() == 1 {
                true
            } else {
                return Err(invalid_arg!("{kind:?}: shapes {sa:?} and {sb:?} do not broadcast"));
            };
            let shape = sa.to_vec();
            let (xa, xb) = (self.value(a).data(), self.value(b).data());
            let f: fn(f64, f64) -> f64 = match kind {
                ElementwiseKind::Add => |x, y| x + y,
                ElementwiseKind::Sub => |x, y| x - y,
                _ => |x, y| x * y,
            };
            let data: Vec<f64> = if b_scalar {
                xa.iter().map(|&x| f(x, xb[0])).collect()
            } else {
                xa.iter().zip(xb).map(|(&x, &y)| f(x, y)).collect()
            };
            let op = match kind {
                ElementwiseKind::Add => Op::Add { a, b, b_scalar },
                ElementwiseKind::Sub => Op::Sub { a, b, b_scalar },
                _ => Op::Mul { a, b, b_scalar },
            };
            return Ok(self.push_derived(&shape, data, &[a, b], op));
        }
        if b.is_some() {
            return Err(invalid_arg!("{kind:?} is unary"));
        }
        Ok(match kind {
            ElementwiseKind::Relu => self.map_unary(a, |x| x.max(0.0), Op::Relu(a)),
            ElementwiseKind::Sigmoid => self.map_unary(a, sigmoid, Op::Sigmoid(a)),
            ElementwiseKind::Exp => self.map_unary(a, f64::exp, Op::Exp(a)),
            ElementwiseKind::Log => self.map_unary(a, f64::ln, Op::Log(a)),
            _ => self.map_unary(a, |x| -x, Op::Neg(a)),
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseKind::Add, a, Some(b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseKind::Sub, a, Some(b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseKind::Mul, a, Some(b))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map_unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map_unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map_unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map_unary(a, f64::ln, Op::Log(a))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.map_unary(a, |x| -x, Op::Neg(a))
    }

    /// `a * factor` for a constant factor.
    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.map_unary(a, |x| x * factor, Op::Scale { a, factor })
    }

    /// `a + offset` for a constant offset.
    pub fn offset(&mut self, a: Var, offset: f64) -> Var {
        self.map_unary(a, |x| x + offset, Op::Offset(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.map_unary(a, |x| x.clamp(lo, hi), Op::Clamp { a, lo, hi })
    }

    /// Cross-correlation of `[N,C,H,W]` input with `[K,C,kh,kw]` kernel plus `[K]` bias.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, padding: usize, stride: usize) -> Result<Var> {
        let [n, c, h, w] = self.value(input).dims4()?;
        let [k, kc, kh, kw] = self.value(kernel).dims4()?;
        if kc != c {
            return Err(invalid_arg!("conv2d: kernel has {kc} input channels, input has {c}"));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(invalid_arg!("conv2d: kernel size {kh}x{kw} must be odd"));
        }
        if stride == 0 {
            return Err(invalid_arg!("conv2d: stride must be positive"));
        }
        if self.value(bias).shape() != [k] {
            return Err(invalid_arg!("conv2d: bias shape {:?}, expected [{k}]", self.shape(bias)));
        }
        let out_dim = |len: usize, ks: usize| -> Result<usize> {
            let span = (len + 2 * padding)
                .checked_sub(ks)
                .ok_or_else(|| invalid_arg!("conv2d: kernel {ks} larger than padded input {len}"))?;
            if span % stride != 0 {
                return Err(invalid_arg!(
                    "conv2d: ({len} + 2*{padding} - {ks}) / {stride} is not integral"
                ));
            }
            Ok(span / stride + 1)
        };
        let geom = ConvGeom {
            n,
            c,
            h,
            w,
            k,
            kh,
            kw,
            padding,
            stride,
            ho: out_dim(h, kh)?,
            wo: out_dim(w, kw)?,
        };
        let out = conv::forward(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
        );
        Ok(self.push_derived(
            &[n, k, geom.ho, geom.wo],
            out,
            &[input, kernel, bias],
            Op::Conv2d { input, kernel, bias, geom },
        ))
    }

    /// 2×2 max pooling with stride 2.
    pub fn max_pool2(&mut self, input: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(input).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(invalid_arg!("max_pool2: spatial size {h}x{w} must be even"));
        }
        let (ho, wo) = (h / 2, w / 2);
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        Ok(self.push_derived(&[n, c, ho, wo], out, &[input], Op::MaxPool2 { input, argmax }))
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&mut self, input: Var, factor: usize) -> Result<Var> {
        if factor < 1 {
            return Err(invalid_arg!("upsample factor must be >= 1, got {factor}"));
        }
        let [n, c, h, w] = self.value(input).dims4()?;
        let (ho, wo) = (h * factor, w * factor);
        let x = self.value(input).data();
        let mut out = vec![0.0; n * c * ho * wo];
        for plane in 0..n * c {
            for oy in 0..ho {
                let src = &x[(plane * h + oy / factor) * w..][..w];
                let dst = &mut out[(plane * ho + oy) * wo..][..wo];
                for (ox, v) in dst.iter_mut().enumerate() {
                    *v = src[ox / factor];
                }
            }
        }
        Ok(self.push_derived(&[n, c, ho, wo], out, &[input], Op::Upsample { input, factor }))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| invalid_arg!("concat of nothing"))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(invalid_arg!("concat axis {axis} out of range for rank {}", base.len()));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(invalid_arg!("concat: {s:?} incompatible with {base:?} on axis {axis}"));
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let chunk = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Ok(self.push_derived(&shape, out, inputs, Op::Concat { inputs: inputs.to_vec(), axis }))
    }

    /// Inverted dropout. Identity when inactive or `rate == 0`.
    pub fn dropout(&mut self, input: Var, rate: f64, active: bool, rng: &mut RngState) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(invalid_arg!("dropout rate {rate} outside [0, 1)"));
        }
        if !active || rate == 0.0 {
            return Ok(input);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let n = self.value(input).numel();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.uniform() < rate { 0.0 } else { keep_scale })
            .collect();
        let t = self.value(input);
        let shape = t.shape().to_vec();
        let data = t.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        Ok(self.push_derived(&shape, data, &[input], Op::Dropout { input, mask }))
    }

    /// Max-shifted log-sum-exp along `axis`; the reduced axis is kept with size 1.
    pub fn log_sum_exp(&mut self, input: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        if axis >= shape.len() {
            return Err(invalid_arg!("log_sum_exp axis {axis} out of range for rank {}", shape.len()));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let x = self.value(input).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| x[(o * len + j) * inner + i];
                let m = (0..len).map(at).fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = (0..len).map(|j| (at(j) - m).exp()).sum();
                out[o * inner + i] = m + s.ln();
            }
        }
        let mut oshape = shape;
        oshape[axis] = 1;
        Ok(self.push_derived(&oshape, out, &[input], Op::LogSumExp { input, axis }))
    }

    /// Sum along `axis`, keeping it with size 1.
    pub fn sum_axis(&mut self, input: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        if axis >= shape.len() {
            return Err(invalid_arg!("sum_axis axis {axis} out of range for rank {}", shape.len()));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let x = self.value(input).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += x[(o * len + j) * inner + i];
                }
            }
        }
        let mut oshape = shape;
        oshape[axis] = 1;
        Ok(self.push_derived(&oshape, out, &[input], Op::SumAxis { input, axis }))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).data().iter().sum();
        self.push_derived(&[1], vec![s], &[input], Op::Sum(input))
    }

    pub fn mean(&mut self, input: Var) -> Var {
        let t = self.value(input);
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push_derived(&[1], vec![m], &[input], Op::Mean(input))
    }

    /// Clears the gradient buffers of every node.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.value.zero_grad();
        }
    }

    /// Reverse sweep from a single-element `loss`.
    ///
    /// Each call adds `d loss / d node` into the grad buffer of every node that
    /// requires grad, so repeated calls accumulate unless [`Tape::zero_grad`] runs
    /// in between.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(invalid_arg!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].value.requires_grad() {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            self.nodes[idx].value.accumulate_grad(&g);
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        let mut send = |v: Var, contribution: Vec<f64>| {
            if !self.requires_grad(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, c)| *a += c),
                slot @ None => *slot = Some(contribution),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add { a, b, b_scalar } | Op::Sub { a, b, b_scalar } => {
                let sign = if matches!(node.op, Op::Sub { .. }) { -1.0 } else { 1.0 };
                send(*a, g.to_vec());
                if *b_scalar {
                    send(*b, vec![sign * g.iter().sum::<f64>()]);
                } else {
                    send(*b, g.iter().map(|x| sign * x).collect());
                }
            }
            Op::Mul { a, b, b_scalar } => {
                let (xa, xb) = (val(*a), val(*b));
                if *b_scalar {
                    send(*a, g.iter().map(|x| x * xb[0]).collect());
                    send(*b, vec![g.iter().zip(xa).map(|(x, y)| x * y).sum()]);
                } else {
                    send(*a, g.iter().zip(xb).map(|(x, y)| x * y).collect());
                    send(*b, g.iter().zip(xa).map(|(x, y)| x * y).collect());
                }
            }
            Op::Neg(a) => send(*a, g.iter().map(|x| -x).collect()),
            Op::Relu(a) => send(
                *a,
                g.iter().zip(val(*a)).map(|(x, &y)| if y > 0.0 { *x } else { 0.0 }).collect(),
            ),
            Op::Sigmoid(a) => send(*a, g.iter().zip(out).map(|(x, s)| x * s * (1.0 - s)).collect()),
            Op::Exp(a) => send(*a, g.iter().zip(out).map(|(x, e)| x * e).collect()),
            Op::Log(a) => send(*a, g.iter().zip(val(*a)).map(|(x, y)| x / y).collect()),
            Op::Scale { a, factor } => send(*a, g.iter().map(|x| x * factor).collect()),
            Op::Offset(a) => send(*a, g.to_vec()),
            Op::Clamp { a, lo, hi } => send(
                *a,
                g.iter()
                    .zip(val(*a))
                    .map(|(x, &y)| if y >= *lo && y <= *hi { *x } else { 0.0 })
                    .collect(),
            ),
            Op::Conv2d { input, kernel, bias, geom } => {
                let grads = conv::backward(geom, val(*input), val(*kernel), g, self.requires_grad(*input));
                if let Some(gi) = grads.input {
                    send(*input, gi);
                }
                send(*kernel, grads.kernel);
                send(*bias, grads.bias);
            }
            Op::MaxPool2 { input, argmax } => {
                let mut gi = vec![0.0; val(*input).len()];
                for (x, &at) in g.iter().zip(argmax) {
                    gi[at] += x;
                }
                send(*input, gi);
            }
            Op::Upsample { input, factor } => {
                let src = &self.nodes[input.0].value;
                let [n, c, h, w] = src.dims4().expect("upsample input is rank 4");
                let (ho, wo) = (h * factor, w * factor);
                let mut gi = vec![0.0; src.numel()];
                for plane in 0..n * c {
                    for oy in 0..ho {
                        let dst = &mut gi[(plane * h + oy / factor) * w..][..w];
                        let row = &g[(plane * ho + oy) * wo..][..wo];
                        for (ox, x) in row.iter().enumerate() {
                            dst[ox / factor] += x;
                        }
                    }
                }
                send(*input, gi);
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = axis_split(node.value.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let len = self.shape(v)[*axis];
                    let mut gi = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        gi.extend_from_slice(&g[start..start + len * inner]);
                    }
                    offset += len;
                    send(v, gi);
                }
            }
            Op::Dropout { input, mask } => send(*input, g.iter().zip(mask).map(|(x, m)| x * m).collect()),
            Op::LogSumExp { input, axis } => {
                let x = val(*input);
                let (outer, len, inner) = axis_split(self.shape(*input), *axis);
                let mut gi = vec![0.0; x.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let (lse, go) = (out[o * inner + i], g[o * inner + i]);
                        for j in 0..len {
                            let at = (o * len + j) * inner + i;
                            gi[at] = go * (x[at] - lse).exp();
                        }
                    }
                }
                send(*input, gi);
            }
            Op::SumAxis { input, axis } => {
                let (outer, len, inner) = axis_split(self.shape(*input), *axis);
                let mut gi = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for j in 0..len {
                        gi[(o * len + j) * inner..][..inner].copy_from_slice(&g[o * inner..][..inner]);
                    }
                }
                send(*input, gi);
            }
            Op::Sum(a) => send(*a, vec![g[0]; val(*a).len()]),
            Op::Mean(a) => {
                let n = val(*a).len();
                send(*a, vec![g[0] / n as f64; n]);
            }
        }
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
