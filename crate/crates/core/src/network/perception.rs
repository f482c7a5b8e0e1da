//! Trainable stand-in for a pretrained feature extractor: a strided
//! convolution pyramid, plus per-layer language decoupling.

use crate::attention::Lsct;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::lang::LanguageFeature;
use crate::layers::Conv;
use crate::params::{Bound, Init, ParamStore};

/// One 3×3 convolution per level; every level after the first halves the
/// resolution, so level `l` is `C_l × H/2^l × W/2^l`.
#[derive(Clone, Debug)]
pub struct PerceptionEncoder {
    pub stages: Vec<Conv>,
}

impl PerceptionEncoder {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, widths: &[usize]) -> Self {
        let mut c_in = 3;
        let stages = widths
            .iter()
            .enumerate()
            .map(|(l, &c)| {
                let stride = if l == 0 { 1 } else { 2 };
                let conv = Conv::new(store, init, &format!("{name}.stage{l}"), c_in, c, 3, stride);
                c_in = c;
                conv
            })
            .collect();
        Self { stages }
    }

    /// Finest level first.
    pub fn forward(&self, g: &mut Graph, p: &Bound, image: Var) -> Result<Vec<Var>> {
        let (c, h, w) = g.value(image).chw()?;
        let factor = 1 << (self.stages.len() - 1);
        if c != 3 || h % factor != 0 || w % factor != 0 {
            return Err(Error::Config(format!(
                "image {c}×{h}×{w} must be 3-channel with sides divisible by {factor}"
            )));
        }
        let mut x = image;
        let mut feats = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let y = stage.forward(g, p, x)?;
            x = g.silu(y)?;
            feats.push(x);
        }
        Ok(feats)
    }
}

/// Pyramid features, decoupled into a transmission and a reflection copy
/// by cross-attention with each layer's caption.
#[derive(Clone, Debug)]
pub struct PerceptionBranch {
    pub encoder: PerceptionEncoder,
    pub decouple_t: Vec<Lsct>,
    pub decouple_r: Vec<Lsct>,
    /// When off, no decoupling blocks are built and both copies are the raw features.
    pub use_lsct: bool,
}

impl PerceptionBranch {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, widths: &[usize], use_lsct: bool) -> Self {
        let encoder = PerceptionEncoder::new(store, init, &format!("{name}.encoder"), widths);
        let mut blocks = |stream: &str| -> Vec<Lsct> {
            if !use_lsct {
                return Vec::new();
            }
            widths
                .iter()
                .enumerate()
                .map(|(l, &c)| Lsct::new(store, init, &format!("{name}.lsct_{stream}{l}"), c, true))
                .collect()
        };
        let decouple_t = blocks("t");
        let decouple_r = blocks("r");
        Self {
            encoder,
            decouple_t,
            decouple_r,
            use_lsct,
        }
    }

    /// Per-level `(transmission, reflection)` features.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        image: Var,
        lang_t: Option<&LanguageFeature>,
        lang_r: Option<&LanguageFeature>,
    ) -> Result<Vec<(Var, Var)>> {
        let feats = self.encoder.forward(g, p, image)?;
        if !self.use_lsct {
            return Ok(feats.into_iter().map(|f| (f, f)).collect());
        }
        feats
            .into_iter()
            .enumerate()
            .map(|(l, f)| {
                let t = self.decouple_t[l].forward(g, p, f, lang_t.map(|x| x.level(l)))?;
                let r = self.decouple_r[l].forward(g, p, f, lang_r.map(|x| x.level(l)))?;
                Ok((t, r))
            })
            .collect()
    }
}
