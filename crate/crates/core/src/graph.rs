//! Reverse-mode differentiation over a flat tape.
//!
//! Every operation appends a node holding its forward value and the
//! handles of its inputs. [`Graph::backward`] walks the tape in reverse
//! and applies hand-derived adjoint rules, leaving each gradient in the
//! `grad` slot of the node's tensor.

use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    /// `C×H×W → 1×C`, mean over positions.
    SpatialAverage,
    /// `C×H×W → HW×1`, mean over channels.
    ChannelAverage,
    /// `C×H×W → 1×C`, max over positions.
    SpatialMax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

/// How the right operand of a binary op is laid over the left one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    Scalar,
    /// `1×C` gate over a `C×H×W` map; `inner` is `H·W`.
    Channel {
        inner: usize,
    },
}

fn broadcast_kind(a: &[usize], b: &[usize]) -> Result<Broadcast> {
    if a == b {
        return Ok(Broadcast::Same);
    }
    if b.iter().product::<usize>() == 1 {
        return Ok(Broadcast::Scalar);
    }
    if let (&[c, h, w], &[1, cb]) = (a, b) {
        if c == cb {
            return Ok(Broadcast::Channel { inner: h * w });
        }
    }
    dim_err(format!("shape {b:?} cannot be broadcast over {a:?}"))
}

const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Conv2d {
        x: Var,
        kernel: Var,
        stride: usize,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    Sigmoid(Var),
    Silu(Var),
    Abs(Var),
    Square(Var),
    Scale(Var, f64),
    Complement(Var),
    Binary {
        a: Var,
        b: Var,
        op: BinaryOp,
        bcast: Broadcast,
    },
    Pool {
        x: Var,
        mode: PoolMode,
    },
    Linear {
        x: Var,
        weight: Var,
        bias: Var,
    },
    MeanAxis {
        x: Var,
        axis: usize,
    },
    Mean(Var),
    Sum(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Upsample2x(Var),
    ChannelNorm(Var),
    ForwardDiff {
        x: Var,
        axis: usize,
    },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// `(outer, len, inner)` strides for iterating along `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Output positions `ox` whose tap `ox*stride + tap - pad` lands inside `[0, extent)`.
fn valid_range(out: usize, stride: usize, tap: usize, pad: usize, extent: usize) -> (usize, usize) {
    let (s, t, p, e) = (stride as isize, tap as isize, pad as isize, extent as isize);
    let lo = if p > t { (p - t + s - 1) / s } else { 0 };
    let last = e + p - t - 1;
    let hi = if last < 0 { 0 } else { (last / s + 1).min(out as isize) };
    (lo as usize, hi.max(lo) as usize)
}

#[derive(Clone, Debug, Default)]
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

    /// Adds an input tensor. It is differentiated iff `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Adds a differentiable input.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.leaf(value.with_requires_grad(true))
    }

    /// Adds a constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, name: &'static str) -> Result<Var> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = self.op_inputs(&op).iter().any(|&v| self.needs_grad(v));
        let value = Tensor::from_parts(shape, data).with_requires_grad(requires_grad);
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn op_inputs(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => vec![*a, *b],
            Op::Binary { a, b, .. } => vec![*a, *b],
            Op::Conv2d { x, kernel, .. } => vec![*x, *kernel],
            Op::Linear { x, weight, bias } => vec![*x, *weight, *bias],
            Op::Concat { parts, .. } => parts.clone(),
            Op::Transpose(x)
            | Op::Reshape(x)
            | Op::Sigmoid(x)
            | Op::Silu(x)
            | Op::Abs(x)
            | Op::Square(x)
            | Op::Scale(x, _)
            | Op::Complement(x)
            | Op::Mean(x)
            | Op::Sum(x)
            | Op::Upsample2x(x)
            | Op::ChannelNorm(x)
            | Op::Softmax { x, .. }
            | Op::Pool { x, .. }
            | Op::MeanAxis { x, .. }
            | Op::Slice { x, .. }
            | Op::ForwardDiff { x, .. } => vec![*x],
        }
    }

    fn chw(&self, v: Var) -> Result<(usize, usize, usize)> {
        self.value(v).chw()
    }

    fn matrix(&self, v: Var) -> Result<(usize, usize)> {
        match self.shape(v) {
            &[r, c] => Ok((r, c)),
            s => dim_err(format!("expected a matrix, got shape {s:?}")),
        }
    }

    // ---- forward operations ------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix(a)?;
        let (k2, n) = self.matrix(b)?;
        if k != k2 {
            return dim_err(format!("matmul inner dimensions differ: {m}×{k} by {k2}×{n}"));
        }
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = ad[i * k + p];
                for (o, &bv) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                    *o += av * bv;
                }
            }
        }
        self.push(vec![m, n], out, Op::MatMul(a, b), "matmul")
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.matrix(x)?;
        let d = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        self.push(vec![c, r], out, Op::Transpose(x), "transpose")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(x).numel() || shape.contains(&0) {
            return dim_err(format!("cannot reshape {:?} into {shape:?}", self.shape(x)));
        }
        let data = self.value(x).data().to_vec();
        self.push(shape.to_vec(), data, Op::Reshape(x), "reshape")
    }

    /// Cross-correlation of a `C_in×H×W` map with a `C_out×C_in×k×k` kernel,
    /// zero padding `k/2`. Stride 1 preserves `H×W`; stride 2 halves it.
    pub fn conv2d(&mut self, x: Var, kernel: Var, stride: usize) -> Result<Var> {
        let (ci, h, w) = self.chw(x)?;
        let (co, k) = match self.shape(kernel) {
            &[co, kci, k, k2] if kci == ci && k == k2 => (co, k),
            s => return dim_err(format!("kernel shape {s:?} incompatible with {ci}-channel input")),
        };
        if k % 2 == 0 {
            return Err(Error::UnsupportedKernel(k));
        }
        if stride == 0 {
            return dim_err("stride must be positive");
        }
        let pad = k / 2;
        let (oh, ow) = ((h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1);
        let (xd, kd) = (self.value(x).data(), self.value(kernel).data());
        let mut out = vec![0.0; co * oh * ow];
        for o in 0..co {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            for c in 0..ci {
                let xplane = &xd[c * h * w..(c + 1) * h * w];
                for ky in 0..k {
                    let (ylo, yhi) = valid_range(oh, stride, ky, pad, h);
                    for kx in 0..k {
                        let wv = kd[((o * ci + c) * k + ky) * k + kx];
                        let (xlo, xhi) = valid_range(ow, stride, kx, pad, w);
                        for oy in ylo..yhi {
                            let iy = oy * stride + ky - pad;
                            let orow = &mut plane[oy * ow..(oy + 1) * ow];
                            let xrow = &xplane[iy * w..(iy + 1) * w];
                            for ox in xlo..xhi {
                                orow[ox] += wv * xrow[ox * stride + kx - pad];
                            }
                        }
                    }
                }
            }
        }
        self.push(vec![co, oh, ow], out, Op::Conv2d { x, kernel, stride }, "conv2d")
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return dim_err(format!("softmax axis {axis} out of range for {shape:?}"));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let d = self.value(x).data();
        let mut out = vec![0.0; d.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let max = (0..len).map(|j| d[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (d[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    out[idx(j)] /= total;
                }
            }
        }
        self.push(shape, out, Op::Softmax { x, axis }, "softmax")
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op, name: &'static str) -> Result<Var> {
        let t = self.value(x);
        let shape = t.shape().to_vec();
        let data = t.data().iter().map(|&v| f(v)).collect();
        self.push(shape, data, op, name)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, sigmoid, Op::Sigmoid(x), "sigmoid")
    }

    /// `x·sigmoid(x)`.
    pub fn silu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, |v| v * sigmoid(v), Op::Silu(x), "silu")
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.unary(x, f64::abs, Op::Abs(x), "abs")
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(x, |v| v * v, Op::Square(x), "square")
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.unary(x, |v| v * factor, Op::Scale(x, factor), "scale")
    }

    /// `1 − x`.
    pub fn complement(&mut self, x: Var) -> Result<Var> {
        self.unary(x, |v| 1.0 - v, Op::Complement(x), "complement")
    }

    /// Binary op where `b` may be the same shape as `a`, a scalar, or a
    /// `1×C` gate over a `C×H×W` map.
    pub fn elementwise(&mut self, a: Var, b: Var, op: BinaryOp) -> Result<Var> {
        let bcast = broadcast_kind(self.shape(a), self.shape(b))?;
        let (at, bt) = (self.value(a), self.value(b));
        let f = match op {
            BinaryOp::Add => |x: f64, y: f64| x + y,
            BinaryOp::Sub => |x: f64, y: f64| x - y,
            BinaryOp::Mul => |x: f64, y: f64| x * y,
        };
        let (ad, bd) = (at.data(), bt.data());
        let out: Vec<f64> = match bcast {
            Broadcast::Same => ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::Scalar => ad.iter().map(|&x| f(x, bd[0])).collect(),
            Broadcast::Channel { inner } => ad.iter().enumerate().map(|(i, &x)| f(x, bd[i / inner])).collect(),
        };
        let shape = at.shape().to_vec();
        let name = match op {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
        };
        self.push(shape, out, Op::Binary { a, b, op, bcast }, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, BinaryOp::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, BinaryOp::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, BinaryOp::Mul)
    }

    pub fn pool(&mut self, x: Var, mode: PoolMode) -> Result<Var> {
        let (c, h, w) = self.chw(x)?;
        let hw = h * w;
        let d = self.value(x).data();
        let (shape, out) = match mode {
            PoolMode::SpatialAverage => (
                vec![1, c],
                d.chunks(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect(),
            ),
            PoolMode::SpatialMax => (
                vec![1, c],
                d.chunks(hw)
                    .map(|p| p.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                    .collect(),
            ),
            PoolMode::ChannelAverage => {
                let mut out = vec![0.0; hw];
                for plane in d.chunks(hw) {
                    for (o, &v) in out.iter_mut().zip(plane) {
                        *o += v;
                    }
                }
                out.iter_mut().for_each(|v| *v /= c as f64);
                (vec![hw, 1], out)
            }
        };
        self.push(shape, out, Op::Pool { x, mode }, "pool")
    }

    /// `x·W + b` over the trailing axis; `weight` is `d_in×d_out`, `bias` has
    /// `d_out` elements.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (din, dout) = self.matrix(weight)?;
        let xs = self.shape(x).to_vec();
        if *xs.last().unwrap() != din {
            return dim_err(format!("linear input {xs:?} does not end in {din}"));
        }
        if self.value(bias).numel() != dout {
            return dim_err(format!(
                "bias of {} elements for {dout} outputs",
                self.value(bias).numel()
            ));
        }
        let rows = self.value(x).numel() / din;
        let (xd, wd, bd) = (self.value(x).data(), self.value(weight).data(), self.value(bias).data());
        let mut out = Vec::with_capacity(rows * dout);
        for r in 0..rows {
            let mut row = bd.to_vec();
            for i in 0..din {
                let xv = xd[r * din + i];
                for (o, &wv) in row.iter_mut().zip(&wd[i * dout..(i + 1) * dout]) {
                    *o += xv * wv;
                }
            }
            out.extend(row);
        }
        let mut shape = xs;
        *shape.last_mut().unwrap() = dout;
        self.push(shape, out, Op::Linear { x, weight, bias }, "linear")
    }

    /// Mean along `axis`, keeping it with extent 1.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let mut shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return dim_err(format!("axis {axis} out of range for {shape:?}"));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let d = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += d[(o * len + j) * inner + i];
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= len as f64);
        shape[axis] = 1;
        self.push(shape, out, Op::MeanAxis { x, axis }, "mean_axis")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let d = self.value(x).data();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        self.push(vec![1], vec![m], Op::Mean(x), "mean")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push(vec![1], vec![s], Op::Sum(x), "sum")
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = match parts.first() {
            Some(&p) => self.shape(p).to_vec(),
            None => return dim_err("concat of zero tensors"),
        };
        if axis >= first.len() {
            return dim_err(format!("concat axis {axis} out of range for {first:?}"));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible =
                s.len() == first.len() && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return dim_err(format!("cannot concat {s:?} with {first:?} on axis {axis}"));
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&first, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let len = self.shape(p)[axis];
                let d = self.value(p).data();
                out.extend_from_slice(&d[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let op = Op::Concat {
            parts: parts.to_vec(),
            axis,
        };
        self.push(shape, out, op, "concat")
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let mut shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return dim_err(format!("slice [{start}, {}) on axis {axis} of {shape:?}", start + len));
        }
        let (outer, full, inner) = axis_split(&shape, axis);
        let d = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&d[base..base + len * inner]);
        }
        shape[axis] = len;
        self.push(shape, out, Op::Slice { x, axis, start }, "slice")
    }

    /// Nearest-neighbour 2× upsampling of a `C×H×W` map.
    pub fn upsample2x(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.chw(x)?;
        let d = self.value(x).data();
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    out[(ch * oh + y) * ow + xx] = d[(ch * h + y / 2) * w + xx / 2];
                }
            }
        }
        self.push(vec![c, oh, ow], out, Op::Upsample2x(x), "upsample2x")
    }

    /// Per-channel standardisation over spatial positions (no affine part).
    pub fn channel_norm(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.chw(x)?;
        let hw = h * w;
        let mut out = self.value(x).data().to_vec();
        for plane in out.chunks_mut(hw) {
            let mean = plane.iter().sum::<f64>() / hw as f64;
            let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / hw as f64;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            plane.iter_mut().for_each(|v| *v = (*v - mean) * inv);
        }
        self.push(vec![c, h, w], out, Op::ChannelNorm(x), "channel_norm")
    }

    /// Forward difference `x[i+1] − x[i]` along axis 1 (rows) or 2 (columns)
    /// of a `C×H×W` map; the last row/column is 0.
    pub fn forward_diff(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (c, h, w) = self.chw(x)?;
        if axis != 1 && axis != 2 {
            return dim_err(format!("forward difference along axis {axis}"));
        }
        let d = self.value(x).data();
        let mut out = vec![0.0; c * h * w];
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let i = (ch * h + y) * w + xx;
                    out[i] = match axis {
                        1 if y + 1 < h => d[i + w] - d[i],
                        2 if xx + 1 < w => d[i + 1] - d[i],
                        _ => 0.0,
                    };
                }
            }
        }
        self.push(vec![c, h, w], out, Op::ForwardDiff { x, axis }, "forward_diff")
    }

    // ---- reverse pass -------------------------------------------------------

    /// Fills the gradient slot of every differentiable node with
    /// `∂loss/∂node`. `loss` must hold a single element.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return dim_err(format!("backward from non-scalar of shape {:?}", self.shape(loss)));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.needs_grad(loss) {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            let g = if node.value.requires_grad() {
                Some(g.unwrap_or_else(|| vec![0.0; node.value.numel()]))
            } else {
                None
            };
            node.value.set_grad(g)?;
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.data();
        let shape = |v: Var| nodes[v.0].value.shape();
        let out = nodes[i].value.data();
        // Runs `$body` against the gradient buffer of input `$v`, allocating
        // it on first use; skipped for inputs that need no gradient.
        macro_rules! with_slot {
            ($v:expr, |$acc:ident| $body:block) => {{
                let v: Var = $v;
                if nodes[v.0].value.requires_grad() {
                    let mut buf = grads[v.0]
                        .take()
                        .unwrap_or_else(|| vec![0.0; nodes[v.0].value.numel()]);
                    {
                        let $acc: &mut Vec<f64> = &mut buf;
                        $body
                    }
                    grads[v.0] = Some(buf);
                }
            }};
        }

        match &nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = (shape(a)[0], shape(a)[1]);
                let n = shape(b)[1];
                with_slot!(a, |da| {
                    let bd = val(b);
                    for r in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[r * n + j] * bd[p * n + j];
                            }
                            da[r * k + p] += s;
                        }
                    }
                });
                with_slot!(b, |db| {
                    let ad = val(a);
                    for r in 0..m {
                        for p in 0..k {
                            let av = ad[r * k + p];
                            for j in 0..n {
                                db[p * n + j] += av * g[r * n + j];
                            }
                        }
                    }
                });
            }
            &Op::Transpose(x) => with_slot!(x, |dx| {
                let (r, c) = (shape(x)[0], shape(x)[1]);
                for a in 0..r {
                    for b in 0..c {
                        dx[a * c + b] += g[b * r + a];
                    }
                }
            }),
            &Op::Reshape(x) => with_slot!(x, |dx| {
                dx.iter_mut().zip(g).for_each(|(d, &v)| *d += v);
            }),
            &Op::Conv2d { x, kernel, stride } => {
                let (ci, h, w) = (shape(x)[0], shape(x)[1], shape(x)[2]);
                let (co, k) = (shape(kernel)[0], shape(kernel)[2]);
                let (oh, ow) = (nodes[i].value.shape()[1], nodes[i].value.shape()[2]);
                let pad = k / 2;
                let (xd, kd) = (val(x), val(kernel));
                // Visits every (weight index, input index, output index) tap.
                let taps = |f: &mut dyn FnMut(usize, usize, usize)| {
                    for o in 0..co {
                        for c in 0..ci {
                            for ky in 0..k {
                                let (ylo, yhi) = valid_range(oh, stride, ky, pad, h);
                                for kx in 0..k {
                                    let widx = ((o * ci + c) * k + ky) * k + kx;
                                    let (xlo, xhi) = valid_range(ow, stride, kx, pad, w);
                                    for oy in ylo..yhi {
                                        let xrow = (c * h + oy * stride + ky - pad) * w;
                                        let obase = (o * oh + oy) * ow;
                                        for ox in xlo..xhi {
                                            f(widx, xrow + ox * stride + kx - pad, obase + ox);
                                        }
                                    }
                                }
                            }
                        }
                    }
                };
                with_slot!(x, |dx| {
                    taps(&mut |wi, xi, oi| dx[xi] += kd[wi] * g[oi]);
                });
                with_slot!(kernel, |dk| {
                    taps(&mut |wi, xi, oi| dk[wi] += g[oi] * xd[xi]);
                });
            }
            &Op::Softmax { x, axis } => with_slot!(x, |dx| {
                let (outer, len, inner) = axis_split(shape(x), axis);
                for o in 0..outer {
                    for q in 0..inner {
                        let idx = |j: usize| (o * len + j) * inner + q;
                        let dot: f64 = (0..len).map(|j| g[idx(j)] * out[idx(j)]).sum();
                        for j in 0..len {
                            dx[idx(j)] += out[idx(j)] * (g[idx(j)] - dot);
                        }
                    }
                }
            }),
            &Op::Sigmoid(x) => with_slot!(x, |dx| {
                for ((d, &y), &gv) in dx.iter_mut().zip(out).zip(g) {
                    *d += gv * y * (1.0 - y);
                }
            }),
            &Op::Silu(x) => with_slot!(x, |dx| {
                for ((d, &xv), &gv) in dx.iter_mut().zip(val(x)).zip(g) {
                    let s = sigmoid(xv);
                    *d += gv * (s + xv * s * (1.0 - s));
                }
            }),
            &Op::Abs(x) => with_slot!(x, |dx| {
                for ((d, &xv), &gv) in dx.iter_mut().zip(val(x)).zip(g) {
                    *d += if xv > 0.0 {
                        gv
                    } else if xv < 0.0 {
                        -gv
                    } else {
                        0.0
                    };
                }
            }),
            &Op::Square(x) => with_slot!(x, |dx| {
                for ((d, &xv), &gv) in dx.iter_mut().zip(val(x)).zip(g) {
                    *d += 2.0 * xv * gv;
                }
            }),
            &Op::Scale(x, f) => with_slot!(x, |dx| {
                dx.iter_mut().zip(g).for_each(|(d, &v)| *d += f * v);
            }),
            &Op::Complement(x) => with_slot!(x, |dx| {
                dx.iter_mut().zip(g).for_each(|(d, &v)| *d -= v);
            }),
            &Op::Binary { a, b, op, bcast } => {
                let bidx = |j: usize| match bcast {
                    Broadcast::Same => j,
                    Broadcast::Scalar => 0,
                    Broadcast::Channel { inner } => j / inner,
                };
                with_slot!(a, |da| {
                    match op {
                        BinaryOp::Add | BinaryOp::Sub => da.iter_mut().zip(g).for_each(|(d, &v)| *d += v),
                        BinaryOp::Mul => {
                            let bd = val(b);
                            for (j, (d, &v)) in da.iter_mut().zip(g).enumerate() {
                                *d += v * bd[bidx(j)];
                            }
                        }
                    }
                });
                with_slot!(b, |db| {
                    let ad = val(a);
                    for (j, &v) in g.iter().enumerate() {
                        db[bidx(j)] += match op {
                            BinaryOp::Add => v,
                            BinaryOp::Sub => -v,
                            BinaryOp::Mul => v * ad[j],
                        };
                    }
                });
            }
            &Op::Pool { x, mode } => with_slot!(x, |dx| {
                let (c, h, w) = (shape(x)[0], shape(x)[1], shape(x)[2]);
                let hw = h * w;
                match mode {
                    PoolMode::SpatialAverage => {
                        for (ch, &gv) in g.iter().enumerate().take(c) {
                            dx[ch * hw..(ch + 1) * hw].iter_mut().for_each(|d| *d += gv / hw as f64);
                        }
                    }
                    PoolMode::ChannelAverage => {
                        for plane in dx.chunks_mut(hw) {
                            for (d, &gv) in plane.iter_mut().zip(g) {
                                *d += gv / c as f64;
                            }
                        }
                    }
                    PoolMode::SpatialMax => {
                        let xd = val(x);
                        for ch in 0..c {
                            let plane = &xd[ch * hw..(ch + 1) * hw];
                            let arg = plane
                                .iter()
                                .enumerate()
                                .fold(0, |best, (j, &v)| if v > plane[best] { j } else { best });
                            dx[ch * hw + arg] += g[ch];
                        }
                    }
                }
            }),
            &Op::Linear { x, weight, bias } => {
                let (din, dout) = (shape(weight)[0], shape(weight)[1]);
                let rows = g.len() / dout;
                with_slot!(x, |dx| {
                    let wd = val(weight);
                    for r in 0..rows {
                        let grow = &g[r * dout..(r + 1) * dout];
                        for p in 0..din {
                            let wrow = &wd[p * dout..(p + 1) * dout];
                            dx[r * din + p] += grow.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                });
                with_slot!(weight, |dw| {
                    let xd = val(x);
                    for r in 0..rows {
                        let grow = &g[r * dout..(r + 1) * dout];
                        for p in 0..din {
                            let xv = xd[r * din + p];
                            for (d, &gv) in dw[p * dout..(p + 1) * dout].iter_mut().zip(grow) {
                                *d += xv * gv;
                            }
                        }
                    }
                });
                with_slot!(bias, |db| {
                    for grow in g.chunks(dout) {
                        db.iter_mut().zip(grow).for_each(|(d, &v)| *d += v);
                    }
                });
            }
            &Op::MeanAxis { x, axis } => with_slot!(x, |dx| {
                let (outer, len, inner) = axis_split(shape(x), axis);
                for o in 0..outer {
                    for j in 0..len {
                        for q in 0..inner {
                            dx[(o * len + j) * inner + q] += g[o * inner + q] / len as f64;
                        }
                    }
                }
            }),
            &Op::Mean(x) => with_slot!(x, |dx| {
                let n = dx.len() as f64;
                dx.iter_mut().for_each(|d| *d += g[0] / n);
            }),
            &Op::Sum(x) => with_slot!(x, |dx| {
                dx.iter_mut().for_each(|d| *d += g[0]);
            }),
            Op::Concat { parts, axis } => {
                let axis = *axis;
                let total = nodes[i].value.shape()[axis];
                let (outer, _, inner) = axis_split(nodes[i].value.shape(), axis);
                let mut offset = 0;
                for &p in parts {
                    let len = shape(p)[axis];
                    with_slot!(p, |dp| {
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            let dst = o * len * inner;
                            for q in 0..len * inner {
                                dp[dst + q] += g[src + q];
                            }
                        }
                    });
                    offset += len;
                }
            }
            &Op::Slice { x, axis, start } => with_slot!(x, |dx| {
                let (outer, full, inner) = axis_split(shape(x), axis);
                let len = nodes[i].value.shape()[axis];
                for o in 0..outer {
                    let base = (o * full + start) * inner;
                    for q in 0..len * inner {
                        dx[base + q] += g[o * len * inner + q];
                    }
                }
            }),
            &Op::Upsample2x(x) => with_slot!(x, |dx| {
                let (c, h, w) = (shape(x)[0], shape(x)[1], shape(x)[2]);
                let (oh, ow) = (2 * h, 2 * w);
                for ch in 0..c {
                    for y in 0..oh {
                        for xx in 0..ow {
                            dx[(ch * h + y / 2) * w + xx / 2] += g[(ch * oh + y) * ow + xx];
                        }
                    }
                }
            }),
            &Op::ChannelNorm(x) => with_slot!(x, |dx| {
                let hw = shape(x)[1] * shape(x)[2];
                let xd = val(x);
                for (ch, (yp, gp)) in out.chunks(hw).zip(g.chunks(hw)).enumerate() {
                    let xp = &xd[ch * hw..(ch + 1) * hw];
                    let mean = xp.iter().sum::<f64>() / hw as f64;
                    let var = xp.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / hw as f64;
                    let inv = 1.0 / (var + NORM_EPS).sqrt();
                    let gmean = gp.iter().sum::<f64>() / hw as f64;
                    let gy = gp.iter().zip(yp).map(|(a, b)| a * b).sum::<f64>() / hw as f64;
                    for j in 0..hw {
                        dx[ch * hw + j] += inv * (gp[j] - gmean - yp[j] * gy);
                    }
                }
            }),
            &Op::ForwardDiff { x, axis } => with_slot!(x, |dx| {
                let (c, h, w) = (shape(x)[0], shape(x)[1], shape(x)[2]);
                for ch in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            let j = (ch * h + y) * w + xx;
                            match axis {
                                1 if y + 1 < h => {
                                    dx[j + w] += g[j];
                                    dx[j] -= g[j];
                                }
                                2 if xx + 1 < w => {
                                    dx[j + 1] += g[j];
                                    dx[j] -= g[j];
                                }
                                _ => {}
                            }
                        }
                    }
                }
            }),
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
