use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::graph::{Graph, Var};
use crate::network::{NetworkConfig, PerceptionEncoder, Prediction};
use crate::params::{Bound, Init, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Pixel MSE on both layers.
    pub lambda1: f64,
    /// Edge (gradient) loss on the transmission layer.
    pub lambda2: f64,
    /// Perceptual loss on the transmission layer.
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 2.0,
            lambda3: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub mse_t: Var,
    pub mse_r: Var,
    pub grad: Var,
    pub perceptual: Var,
}

fn same_shape(g: &Graph, x: Var, y: Var) -> Result<()> {
    if g.shape(x) != g.shape(y) {
        return dim_err(format!("shapes {:?} and {:?} differ", g.shape(x), g.shape(y)));
    }
    Ok(())
}

/// Mean squared error over all elements.
pub fn mse(g: &mut Graph, x: Var, y: Var) -> Result<Var> {
    same_shape(g, x, y)?;
    let d = g.sub(x, y)?;
    let sq = g.square(d)?;
    g.mean(sq)
}

/// Mean absolute difference of forward-difference image gradients, averaged
/// over the row and column directions. The last row (column) has zero
/// gradient in its direction.
pub fn grad_loss(g: &mut Graph, x: Var, y: Var) -> Result<Var> {
    same_shape(g, x, y)?;
    let mut terms = Vec::with_capacity(2);
    for axis in [1, 2] {
        let dx = g.forward_diff(x, axis)?;
        let dy = g.forward_diff(y, axis)?;
        let diff = g.sub(dx, dy)?;
        let a = g.abs(diff)?;
        terms.push(g.mean(a)?);
    }
    let s = g.add(terms[0], terms[1])?;
    g.scale(s, 0.5)
}

/// Frozen, seeded feature pyramid used as the perceptual feature extractor.
#[derive(Clone, Debug)]
pub struct PerceptualStub {
    encoder: PerceptionEncoder,
    params: ParamStore,
}

impl PerceptualStub {
    pub fn new(widths: &[usize], seed: u64) -> Self {
        let mut params = ParamStore::new();
        let mut init = Init::new(seed ^ 0x9e37_79b9_7f4a_7c15);
        let encoder = PerceptionEncoder::new(&mut params, &mut init, "perceptual", widths);
        Self { encoder, params }
    }

    /// Three levels with the first three network widths, seeded from the
    /// network seed.
    pub fn for_config(config: &NetworkConfig) -> Self {
        let levels = config.channels.len().min(3);
        Self::new(&config.channels[..levels], config.seed)
    }

    pub fn bind(&self, g: &mut Graph) -> Bound {
        self.params.bind(g, false)
    }

    pub fn features(&self, g: &mut Graph, bound: &Bound, x: Var) -> Result<Vec<Var>> {
        self.encoder.forward(g, bound, x)
    }
}

/// Mean over pyramid levels of the mean absolute feature difference.
pub fn perceptual_loss(g: &mut Graph, stub: &PerceptualStub, bound: &Bound, x: Var, y: Var) -> Result<Var> {
    same_shape(g, x, y)?;
    let fx = stub.features(g, bound, x)?;
    let fy = stub.features(g, bound, y)?;
    let mut acc: Option<Var> = None;
    for (a, b) in fx.iter().zip(&fy) {
        let d = g.sub(*a, *b)?;
        let d = g.abs(d)?;
        let m = g.mean(d)?;
        acc = Some(match acc {
            Some(s) => g.add(s, m)?,
            None => m,
        });
    }
    let total = acc.expect("pyramid has at least one level");
    g.scale(total, 1.0 / fx.len() as f64)
}

/// `λ1·(MSE(T̂,T) + MSE(R̂,R)) + λ2·grad(T̂,T) + λ3·perceptual(T̂,T)`.
pub fn loss_total(
    g: &mut Graph,
    pred: Prediction,
    gt_t: Var,
    gt_r: Var,
    weights: &LossWeights,
    stub: &PerceptualStub,
) -> Result<LossTerms> {
    let mse_t = mse(g, pred.t_hat, gt_t)?;
    let mse_r = mse(g, pred.r_hat, gt_r)?;
    let grad = grad_loss(g, pred.t_hat, gt_t)?;
    let bound = stub.bind(g);
    let perceptual = perceptual_loss(g, stub, &bound, pred.t_hat, gt_t)?;

    let pixel = g.add(mse_t, mse_r)?;
    let pixel = g.scale(pixel, weights.lambda1)?;
    let edge = g.scale(grad, weights.lambda2)?;
    let feat = g.scale(perceptual, weights.lambda3)?;
    let total = g.add(pixel, edge)?;
    let total = g.add(total, feat)?;
    Ok(LossTerms {
        total,
        mse_t,
        mse_r,
        grad,
        perceptual,
    })
}
