//! Competition between language-guided and visually driven channel gates.

use crate::error::Result;
use crate::graph::{Graph, PoolMode, Var};
use crate::layers::{Dense, Mlp};
use crate::params::{Bound, Init, ParamStore};

use super::check_language;

/// Intermediates of a language-conditioned pass.
#[derive(Clone, Copy, Debug)]
pub struct LcamState {
    /// `C×C` language-image similarity; row = language channel, column = image channel.
    pub similarity: Var,
    /// `1×C` column means of `similarity`.
    pub scores: Var,
    /// `sigmoid(scores)`: weight of the language gate.
    pub sigma: Var,
    /// `1 − sigma`: weight of the channel gate.
    pub complement: Var,
    pub lang_gate: Var,
    pub chan_gate: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Lcam {
    pub proj_lang: Dense,
    pub proj_img: Dense,
    pub lang_gate: Mlp,
    pub chan_gate: Mlp,
    pub use_language: bool,
    pub use_channel: bool,
}

impl Lcam {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, channels: usize) -> Self {
        let hidden = (channels / 4).max(2);
        Self {
            proj_lang: Dense::new(store, init, &format!("{name}.proj_lang"), channels, channels),
            proj_img: Dense::new(store, init, &format!("{name}.proj_img"), channels, channels),
            lang_gate: Mlp::new(store, init, &format!("{name}.lang_gate"), channels, hidden, channels),
            chan_gate: Mlp::new(store, init, &format!("{name}.chan_gate"), channels, hidden, channels),
            use_language: true,
            use_channel: true,
        }
    }

    /// Squeeze-excite gate `sigmoid(MLP(avgpool(F_I)))`.
    pub fn channel_gate(&self, g: &mut Graph, p: &Bound, f_i: Var) -> Result<Var> {
        let pooled = g.pool(f_i, PoolMode::SpatialAverage)?;
        let h = self.chan_gate.forward(g, p, pooled)?;
        g.sigmoid(h)
    }

    /// With language the output is
    /// `(σ_S ⊙ a_lang + (1 − σ_S) ⊙ a_chan) ⊙ F_I + F_I`;
    /// without it, `a_chan ⊙ F_I + F_I`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, f_i: Var, f_l: Option<Var>) -> Result<(Var, Option<LcamState>)> {
        check_language(g, f_i, f_l)?;
        let chan = if self.use_channel {
            Some(self.channel_gate(g, p, f_i)?)
        } else {
            None
        };
        let lang = match f_l {
            Some(l) if self.use_language => l,
            _ => {
                let out = match chan {
                    Some(a) => {
                        let gated = g.mul(f_i, a)?;
                        g.add(gated, f_i)?
                    }
                    None => f_i,
                };
                return Ok((out, None));
            }
        };

        let pooled = g.pool(f_i, PoolMode::SpatialAverage)?;
        let u = self.proj_lang.forward(g, p, lang)?;
        let v = self.proj_img.forward(g, p, pooled)?;
        let ut = g.transpose(u)?;
        let similarity = g.matmul(ut, v)?;
        let scores = g.mean_axis(similarity, 0)?;
        let sigma = g.sigmoid(scores)?;
        let complement = g.complement(sigma)?;
        let lang_logits = self.lang_gate.forward(g, p, u)?;
        let lang_gate = g.sigmoid(lang_logits)?;

        let mut gate = g.mul(sigma, lang_gate)?;
        if let Some(a) = chan {
            let weighted = g.mul(complement, a)?;
            gate = g.add(gate, weighted)?;
        }
        let gated = g.mul(f_i, gate)?;
        let out = g.add(gated, f_i)?;
        let state = LcamState {
            similarity,
            scores,
            sigma,
            complement,
            lang_gate,
            chan_gate: chan,
        };
        Ok((out, Some(state)))
    }
}
