//! Language-aware attention modules.
//!
//! Each module accepts an optional `1×C` language feature. When it is
//! `None` the module falls back to its visual-only path.

mod alcm;
mod lasb;
mod lcam;
mod lsca;
mod mfdm;

pub use alcm::{Alcm, AlcmState};
pub use lasb::Lasb;
pub use lcam::{Lcam, LcamState};
pub use lsca::{Lsca, LscaState, Lsct};
pub use mfdm::{ChannelGroup, Mfdm, MfdmConfig};

use crate::error::{dim_err, Result};
use crate::graph::{Graph, Var};

/// Checks that an optional language row matches the feature map's width.
pub(crate) fn check_language(g: &Graph, f_i: Var, f_l: Option<Var>) -> Result<usize> {
    let (c, _, _) = g.value(f_i).chw()?;
    if let Some(l) = f_l {
        if g.shape(l) != [1, c] {
            return dim_err(format!(
                "language feature {:?} does not match {c}-channel image features",
                g.shape(l)
            ));
        }
    }
    Ok(c)
}
