//! Multi-receptive-field decoupling across the transmission and reflection
//! streams.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::graph::{Graph, Var};
use crate::layers::Conv;
use crate::params::{Bound, Init, ParamStore};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MfdmConfig {
    pub kernel_sizes: Vec<usize>,
}

impl Default for MfdmConfig {
    fn default() -> Self {
        Self::new(vec![1, 3, 5, 7])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelGroup {
    pub start: usize,
    pub len: usize,
    pub kernel: usize,
}

impl MfdmConfig {
    pub fn new(kernel_sizes: Vec<usize>) -> Self {
        Self { kernel_sizes }
    }

    /// Splits `channels` as evenly as possible, one group per kernel size;
    /// leftover channels go to the group with the smallest kernel.
    pub fn groups(&self, channels: usize) -> Result<Vec<ChannelGroup>> {
        let n = self.kernel_sizes.len();
        if n == 0 {
            return Err(Error::Config("at least one kernel size is required".into()));
        }
        if let Some(&k) = self.kernel_sizes.iter().find(|&&k| k % 2 == 0) {
            return Err(Error::Config(format!("kernel size {k} is not odd")));
        }
        if channels < n {
            return Err(Error::Config(format!(
                "{channels} channels cannot be split into {n} kernel groups"
            )));
        }
        let smallest = (0..n).min_by_key(|&i| self.kernel_sizes[i]).unwrap();
        let base = channels / n;
        let mut start = 0;
        Ok(self
            .kernel_sizes
            .iter()
            .enumerate()
            .map(|(i, &kernel)| {
                let len = base + if i == smallest { channels % n } else { 0 };
                let grp = ChannelGroup { start, len, kernel };
                start += len;
                grp
            })
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct Mfdm {
    pub groups: Vec<ChannelGroup>,
    pub t_convs: Vec<Conv>,
    pub r_convs: Vec<Conv>,
    pub t_fuse: Conv,
    pub r_fuse: Conv,
}

impl Mfdm {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, channels: usize, cfg: &MfdmConfig) -> Result<Self> {
        let groups = cfg.groups(channels)?;
        let mut convs = |stream: &str| -> Vec<Conv> {
            groups
                .iter()
                .enumerate()
                .map(|(i, grp)| {
                    let n = format!("{name}.{stream}.group{i}");
                    Conv::new(store, init, &n, grp.len, grp.len, grp.kernel, 1)
                })
                .collect()
        };
        let t_convs = convs("t");
        let r_convs = convs("r");
        let t_fuse = Conv::new(store, init, &format!("{name}.t.fuse"), channels, channels, 1, 1);
        let r_fuse = Conv::new(store, init, &format!("{name}.r.fuse"), channels, channels, 1, 1);
        Ok(Self {
            groups,
            t_convs,
            r_convs,
            t_fuse,
            r_fuse,
        })
    }

    fn stream(&self, g: &mut Graph, p: &Bound, own: Var, other: Var, convs: &[Conv], fuse: &Conv) -> Result<Var> {
        let mut parts = Vec::with_capacity(self.groups.len());
        for (grp, conv) in self.groups.iter().zip(convs) {
            let x = g.slice(own, 0, grp.start, grp.len)?;
            let y = conv.forward(g, p, x)?;
            let guide = g.slice(other, 0, grp.start, grp.len)?;
            parts.push(g.mul(y, guide)?);
        }
        let joined = g.concat(&parts, 0)?;
        let fused = fuse.forward(g, p, joined)?;
        g.add(fused, own)
    }

    /// Returns the updated `(F_T, F_R)`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, f_t: Var, f_r: Var) -> Result<(Var, Var)> {
        if g.shape(f_t) != g.shape(f_r) {
            return dim_err(format!(
                "stream shapes differ: {:?} vs {:?}",
                g.shape(f_t),
                g.shape(f_r)
            ));
        }
        let total: usize = self.groups.iter().map(|grp| grp.len).sum();
        let (c, _, _) = g.value(f_t).chw()?;
        if c != total {
            return dim_err(format!("{c}-channel input for a {total}-channel module"));
        }
        let t = self.stream(g, p, f_t, f_r, &self.t_convs, &self.t_fuse)?;
        let r = self.stream(g, p, f_r, f_t, &self.r_convs, &self.r_fuse)?;
        Ok((t, r))
    }
}
