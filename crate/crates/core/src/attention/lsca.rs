//! Spatial-channel cross attention driven by language, and the pre-norm
//! transformer block that wraps it.

use crate::error::Result;
use crate::graph::{Graph, PoolMode, Var};
use crate::layers::{ChannelNorm, Conv, Dense};
use crate::params::{Bound, Init, ParamStore};

use super::check_language;

#[derive(Clone, Copy, Debug)]
pub struct LscaState {
    /// `1×C` spatially pooled descriptor.
    pub spatial_pooled: Var,
    /// `HW×1` channel-pooled descriptor.
    pub channel_pooled: Var,
    /// `C×C` global interaction, before softmax.
    pub global: Var,
    /// `HW×C` local interaction, before softmax.
    pub local: Var,
    pub global_attn: Var,
    pub local_attn: Var,
    /// `HW×C` product `local_attn × global_attn`.
    pub combined: Var,
}

#[derive(Clone, Debug)]
pub struct Lsca {
    pub lang_global: Dense,
    pub img_global: Dense,
    pub lang_local: Dense,
    pub spatial: Dense,
}

impl Lsca {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, channels: usize) -> Self {
        Self {
            lang_global: Dense::new(store, init, &format!("{name}.lang_global"), channels, channels),
            img_global: Dense::new(store, init, &format!("{name}.img_global"), channels, channels),
            lang_local: Dense::new(store, init, &format!("{name}.lang_local"), channels, channels),
            spatial: Dense::new(store, init, &format!("{name}.spatial"), 1, 1),
        }
    }

    /// The attention term `F_I ⊙ reshape(M_LCSLᵀ)` alone, without residual.
    pub fn attend(&self, g: &mut Graph, p: &Bound, f_i: Var, f_l: Var) -> Result<(Var, LscaState)> {
        let (c, h, w) = g.value(f_i).chw()?;
        let spatial_pooled = g.pool(f_i, PoolMode::SpatialAverage)?;
        let channel_pooled = g.pool(f_i, PoolMode::ChannelAverage)?;

        let lg = self.lang_global.forward(g, p, f_l)?;
        let lg = g.transpose(lg)?;
        let ig = self.img_global.forward(g, p, spatial_pooled)?;
        let global = g.matmul(lg, ig)?;

        let sp = self.spatial.forward(g, p, channel_pooled)?;
        let ll = self.lang_local.forward(g, p, f_l)?;
        let local = g.matmul(sp, ll)?;

        let global_attn = g.softmax(global, 1)?;
        let local_attn = g.softmax(local, 1)?;
        let combined = g.matmul(local_attn, global_attn)?;
        let per_channel = g.transpose(combined)?;
        let map = g.reshape(per_channel, &[c, h, w])?;
        let term = g.mul(f_i, map)?;
        Ok((
            term,
            LscaState {
                spatial_pooled,
                channel_pooled,
                global,
                local,
                global_attn,
                local_attn,
                combined,
            },
        ))
    }

    /// `F_I ⊙ reshape(M_LCSLᵀ) + F_I`, or `F_I` itself without language.
    pub fn forward(&self, g: &mut Graph, p: &Bound, f_i: Var, f_l: Option<Var>) -> Result<(Var, Option<LscaState>)> {
        check_language(g, f_i, f_l)?;
        match f_l {
            None => Ok((f_i, None)),
            Some(l) => {
                let (term, state) = self.attend(g, p, f_i, l)?;
                Ok((g.add(term, f_i)?, Some(state)))
            }
        }
    }
}

/// Pre-norm block: cross attention with residual, then a pointwise
/// feed-forward (expansion 2) with residual.
#[derive(Clone, Debug)]
pub struct Lsct {
    pub norm_attn: ChannelNorm,
    pub attn: Lsca,
    pub norm_ff: ChannelNorm,
    pub ff_in: Conv,
    pub ff_out: Conv,
}

impl Lsct {
    /// `zero_ff` starts the feed-forward output at zero so the block is the
    /// identity until language or training moves it.
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, channels: usize, zero_ff: bool) -> Self {
        let norm_attn = ChannelNorm::new(store, &format!("{name}.norm_attn"), channels);
        let attn = Lsca::new(store, init, &format!("{name}.attn"), channels);
        let norm_ff = ChannelNorm::new(store, &format!("{name}.norm_ff"), channels);
        let ff_in = Conv::new(store, init, &format!("{name}.ff_in"), channels, 2 * channels, 1, 1);
        let ff_out = if zero_ff {
            Conv::zeroed(store, &format!("{name}.ff_out"), 2 * channels, channels, 1)
        } else {
            Conv::new(store, init, &format!("{name}.ff_out"), 2 * channels, channels, 1, 1)
        };
        Self {
            norm_attn,
            attn,
            norm_ff,
            ff_in,
            ff_out,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, f_l: Option<Var>) -> Result<Var> {
        check_language(g, x, f_l)?;
        let x = match f_l {
            Some(l) => {
                let n = self.norm_attn.forward(g, p, x)?;
                let (term, _) = self.attn.attend(g, p, n, l)?;
                g.add(x, term)?
            }
            None => x,
        };
        let n = self.norm_ff.forward(g, p, x)?;
        let h = self.ff_in.forward(g, p, n)?;
        let h = g.silu(h)?;
        let y = self.ff_out.forward(g, p, h)?;
        g.add(x, y)
    }
}
