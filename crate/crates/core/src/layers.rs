//! Parameterised building blocks shared by the attention modules and the
//! network.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{Bound, Init, ParamId, ParamStore};
use crate::tensor::Tensor;

/// "Same"-padded convolution with a per-channel bias.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
}

impl Conv {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            init.fan_in(&[c_out, c_in, k, k], c_in * k * k),
        );
        let bias = store.add(
            format!("{name}.bias"),
            Tensor::from_parts(vec![1, c_out], vec![0.0; c_out]),
        );
        Self { weight, bias, stride }
    }

    /// Convolution whose weights start at zero.
    pub fn zeroed(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, k: usize) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            Tensor::from_parts(vec![c_out, c_in, k, k], vec![0.0; c_out * c_in * k * k]),
        );
        let bias = store.add(
            format!("{name}.bias"),
            Tensor::from_parts(vec![1, c_out], vec![0.0; c_out]),
        );
        Self {
            weight,
            bias,
            stride: 1,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = g.conv2d(x, p.var(self.weight), self.stride)?;
        g.add(y, p.var(self.bias))
    }
}

/// Affine map on row vectors: `x·W + b`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, d_in: usize, d_out: usize) -> Self {
        let weight = store.add(format!("{name}.weight"), init.fan_in(&[d_in, d_out], d_in));
        let bias = store.add(format!("{name}.bias"), init.fan_in(&[1, d_out], d_in));
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.linear(x, p.var(self.weight), p.var(self.bias))
    }
}

/// Two dense layers with a SiLU in between.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Dense,
    pub out: Dense,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
    ) -> Self {
        Self {
            hidden: Dense::new(store, init, &format!("{name}.hidden"), d_in, d_hidden),
            out: Dense::new(store, init, &format!("{name}.out"), d_hidden, d_out),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let h = self.hidden.forward(g, p, x)?;
        let h = g.silu(h)?;
        self.out.forward(g, p, h)
    }
}

/// Per-channel standardisation followed by a learned scale and shift.
#[derive(Clone, Debug)]
pub struct ChannelNorm {
    pub scale: ParamId,
    pub shift: ParamId,
}

impl ChannelNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        let scale = store.add(
            format!("{name}.scale"),
            Tensor::from_parts(vec![1, channels], vec![1.0; channels]),
        );
        let shift = store.add(
            format!("{name}.shift"),
            Tensor::from_parts(vec![1, channels], vec![0.0; channels]),
        );
        Self { scale, shift }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let n = g.channel_norm(x)?;
        let n = g.mul(n, p.var(self.scale))?;
        g.add(n, p.var(self.shift))
    }
}
