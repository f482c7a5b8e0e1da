//! Gated fusion of projected language and pooled image features.

use crate::error::{dim_err, Result};
use crate::graph::{Graph, PoolMode, Var};
use crate::layers::Dense;
use crate::params::{Bound, Init, ParamStore};

#[derive(Clone, Copy, Debug)]
pub struct AlcmState {
    /// `1×C` fusion gate in `(0, 1)`.
    pub sigma: Var,
    pub calibrated: Var,
    pub image_proj: Var,
    pub lang_proj: Var,
}

#[derive(Clone, Debug)]
pub struct Alcm {
    pub img: Dense,
    pub lang: Dense,
    pub gate: Dense,
}

impl Alcm {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, channels: usize) -> Self {
        Self {
            img: Dense::new(store, init, &format!("{name}.img"), channels, channels),
            lang: Dense::new(store, init, &format!("{name}.lang"), channels, channels),
            gate: Dense::new(store, init, &format!("{name}.gate"), 2 * channels, channels),
        }
    }

    /// `σ_c ⊙ p_l + (1 − σ_c) ⊙ p_i`, with `σ_c = sigmoid(W·[p_i, p_l] + b)`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, f_i: Var, f_l: Var) -> Result<(Var, AlcmState)> {
        let (c, _, _) = g.value(f_i).chw()?;
        if g.shape(f_l) != [1, c] {
            return dim_err(format!(
                "language feature {:?} does not match {c}-channel image features",
                g.shape(f_l)
            ));
        }
        let pooled = g.pool(f_i, PoolMode::SpatialAverage)?;
        let image_proj = self.img.forward(g, p, pooled)?;
        let lang_proj = self.lang.forward(g, p, f_l)?;
        let joint = g.concat(&[image_proj, lang_proj], 1)?;
        let logits = self.gate.forward(g, p, joint)?;
        let sigma = g.sigmoid(logits)?;
        let keep = g.complement(sigma)?;
        let from_lang = g.mul(sigma, lang_proj)?;
        let from_img = g.mul(keep, image_proj)?;
        let calibrated = g.add(from_lang, from_img)?;
        Ok((
            calibrated,
            AlcmState {
                sigma,
                calibrated,
                image_proj,
                lang_proj,
            },
        ))
    }
}
