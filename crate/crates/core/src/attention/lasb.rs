use crate::error::{dim_err, Result};
use crate::graph::{Graph, Var};
use crate::params::{Bound, Init, ParamStore};

use super::{Lcam, Mfdm, MfdmConfig};

/// Separation block: one competition-attention module per stream, each
/// gated by its own layer's caption, followed by joint decoupling.
#[derive(Clone, Debug)]
pub struct Lasb {
    pub lcam_t: Lcam,
    pub lcam_r: Lcam,
    pub mfdm: Mfdm,
}

impl Lasb {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, channels: usize, cfg: &MfdmConfig) -> Result<Self> {
        Ok(Self {
            lcam_t: Lcam::new(store, init, &format!("{name}.lcam_t"), channels),
            lcam_r: Lcam::new(store, init, &format!("{name}.lcam_r"), channels),
            mfdm: Mfdm::new(store, init, &format!("{name}.mfdm"), channels, cfg)?,
        })
    }

    pub fn set_flags(&mut self, use_language: bool, use_channel: bool) {
        for m in [&mut self.lcam_t, &mut self.lcam_r] {
            m.use_language = use_language;
            m.use_channel = use_channel;
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        f_t: Var,
        f_r: Var,
        lang_t: Option<Var>,
        lang_r: Option<Var>,
    ) -> Result<(Var, Var)> {
        if g.shape(f_t) != g.shape(f_r) {
            return dim_err(format!(
                "stream shapes differ: {:?} vs {:?}",
                g.shape(f_t),
                g.shape(f_r)
            ));
        }
        let (t, _) = self.lcam_t.forward(g, p, f_t, lang_t)?;
        let (r, _) = self.lcam_r.forward(g, p, f_r, lang_r)?;
        self.mfdm.forward(g, p, t, r)
    }
}
