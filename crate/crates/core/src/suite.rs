//! The full finite-difference gradient suite: every tape operation, every
//! attention module, the training loss and the end-to-end network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{Alcm, Lasb, Lcam, Lsca, Lsct, Mfdm, MfdmConfig};
use crate::error::Result;
use crate::gradcheck::{grad_check_with, GradCheckReport, Probe};
use crate::graph::{BinaryOp, Graph, PoolMode, Var};
use crate::lang::LanguageEncoder;
use crate::network::{Alanet, ModuleFlags, NetworkConfig, PerceptionBranch, Prediction};
use crate::params::{Bound, Init, ParamStore};
use crate::tensor::Tensor;
use crate::train::{loss_total, LossWeights, PerceptualStub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteOptions {
    pub h: f64,
    /// Tolerance for single operations and modules.
    pub tol: f64,
    /// Tolerance for the whole network plus loss.
    pub end_to_end_tol: f64,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            h: 1e-4,
            tol: 1e-4,
            end_to_end_tol: 1e-3,
            seed: 0,
        }
    }
}

fn rand_t(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(shape, -1.0, 1.0, &mut rng).expect("static shapes are valid")
}

/// Sum of `v` weighted by a fixed random tensor, so every output element
/// gets its own cotangent.
pub fn weighted_sum(g: &mut Graph, v: Var, seed: u64) -> Result<Var> {
    let w = g.constant(rand_t(g.shape(v), seed ^ 0xa5a5));
    let p = g.mul(v, w)?;
    g.sum(p)
}

struct Checker<'a> {
    opts: &'a SuiteOptions,
    reports: Vec<GradCheckReport>,
}

impl Checker<'_> {
    fn run(
        &mut self,
        name: &str,
        f: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
        inputs: &[Tensor],
        tol: f64,
        probe: Probe,
    ) -> Result<()> {
        self.reports
            .push(grad_check_with(name, f, inputs, self.opts.h, tol, probe)?);
        Ok(())
    }

    fn op(&mut self, name: &str, f: impl Fn(&mut Graph, &[Var]) -> Result<Var>, inputs: &[Tensor]) -> Result<()> {
        let seed = self.opts.seed;
        self.run(
            name,
            |g, v| {
                let out = f(g, v)?;
                weighted_sum(g, out, seed)
            },
            inputs,
            self.opts.tol,
            Probe::All,
        )
    }
}

pub fn op_checks(opts: &SuiteOptions) -> Result<Vec<GradCheckReport>> {
    let s = opts.seed;
    let r = |shape: &[usize], k: u64| rand_t(shape, s.wrapping_mul(1000).wrapping_add(k));
    let mut c = Checker {
        opts,
        reports: Vec::new(),
    };
    c.op("matmul", |g, v| g.matmul(v[0], v[1]), &[r(&[3, 4], 1), r(&[4, 2], 2)])?;
    c.op("transpose", |g, v| g.transpose(v[0]), &[r(&[3, 4], 3)])?;
    c.op("reshape", |g, v| g.reshape(v[0], &[2, 6]), &[r(&[3, 4], 4)])?;
    c.op(
        "conv2d",
        |g, v| g.conv2d(v[0], v[1], 1),
        &[r(&[2, 5, 5], 5), r(&[3, 2, 3, 3], 6)],
    )?;
    c.op(
        "conv2d_stride2",
        |g, v| g.conv2d(v[0], v[1], 2),
        &[r(&[2, 6, 6], 7), r(&[2, 2, 3, 3], 8)],
    )?;
    c.op(
        "conv2d_k5",
        |g, v| g.conv2d(v[0], v[1], 1),
        &[r(&[1, 4, 4], 9), r(&[2, 1, 5, 5], 10)],
    )?;
    c.op("softmax_rows", |g, v| g.softmax(v[0], 1), &[r(&[3, 4], 11)])?;
    c.op("softmax_cols", |g, v| g.softmax(v[0], 0), &[r(&[3, 4], 12)])?;
    c.op("sigmoid", |g, v| g.sigmoid(v[0]), &[r(&[2, 3], 13)])?;
    c.op("silu", |g, v| g.silu(v[0]), &[r(&[2, 3], 14)])?;
    c.op("abs", |g, v| g.abs(v[0]), &[Tensor::new([3], vec![0.5, -0.25, 0.9])?])?;
    c.op("square", |g, v| g.square(v[0]), &[r(&[2, 3], 15)])?;
    c.op("scale", |g, v| g.scale(v[0], -2.5), &[r(&[2, 3], 16)])?;
    c.op("complement", |g, v| g.complement(v[0]), &[r(&[2, 3], 17)])?;
    for (name, op) in [("add", BinaryOp::Add), ("sub", BinaryOp::Sub), ("mul", BinaryOp::Mul)] {
        c.op(
            name,
            |g, v| g.elementwise(v[0], v[1], op),
            &[r(&[2, 3, 3], 18), r(&[2, 3, 3], 19)],
        )?;
        c.op(
            &format!("{name}_channel"),
            |g, v| g.elementwise(v[0], v[1], op),
            &[r(&[2, 3, 3], 20), r(&[1, 2], 21)],
        )?;
        c.op(
            &format!("{name}_scalar"),
            |g, v| g.elementwise(v[0], v[1], op),
            &[r(&[2, 3], 22), r(&[1], 23)],
        )?;
    }
    for (name, mode) in [
        ("pool_spatial_avg", PoolMode::SpatialAverage),
        ("pool_channel_avg", PoolMode::ChannelAverage),
        ("pool_spatial_max", PoolMode::SpatialMax),
    ] {
        c.op(name, |g, v| g.pool(v[0], mode), &[r(&[3, 3, 4], 24)])?;
    }
    c.op(
        "linear",
        |g, v| g.linear(v[0], v[1], v[2]),
        &[r(&[3, 4], 25), r(&[4, 2], 26), r(&[2], 27)],
    )?;
    c.op("mean_axis0", |g, v| g.mean_axis(v[0], 0), &[r(&[3, 4], 28)])?;
    c.op("mean_axis1", |g, v| g.mean_axis(v[0], 1), &[r(&[3, 4], 29)])?;
    c.op("mean", |g, v| g.mean(v[0]), &[r(&[3, 4], 30)])?;
    c.op("sum", |g, v| g.sum(v[0]), &[r(&[3, 4], 31)])?;
    c.op(
        "concat_channels",
        |g, v| g.concat(&[v[0], v[1]], 0),
        &[r(&[1, 2, 2], 32), r(&[2, 2, 2], 33)],
    )?;
    c.op(
        "concat_rows",
        |g, v| g.concat(&[v[0], v[1], v[0]], 1),
        &[r(&[1, 3], 34), r(&[1, 2], 35)],
    )?;
    c.op("slice", |g, v| g.slice(v[0], 0, 1, 2), &[r(&[4, 2, 2], 36)])?;
    c.op("upsample2x", |g, v| g.upsample2x(v[0]), &[r(&[2, 2, 3], 37)])?;
    c.op("channel_norm", |g, v| g.channel_norm(v[0]), &[r(&[2, 3, 3], 38)])?;
    c.op(
        "forward_diff_rows",
        |g, v| g.forward_diff(v[0], 1),
        &[r(&[2, 3, 4], 39)],
    )?;
    c.op(
        "forward_diff_cols",
        |g, v| g.forward_diff(v[0], 2),
        &[r(&[2, 3, 4], 40)],
    )?;
    Ok(c.reports)
}

/// Gradient check of a module with respect to its inputs and every
/// parameter in `store`. The closure receives the leading `n_inputs` vars
/// and a [`Bound`] over the rest.
fn module_check(
    c: &mut Checker<'_>,
    name: &str,
    store: &ParamStore,
    inputs: Vec<Tensor>,
    f: impl Fn(&mut Graph, &Bound, &[Var]) -> Result<Var>,
) -> Result<()> {
    let n = inputs.len();
    let mut all = inputs;
    all.extend(store.tensors().iter().cloned());
    let seed = c.opts.seed;
    let tol = c.opts.tol;
    c.run(
        name,
        |g, v| {
            let bound = Bound::from_vars(v[n..].to_vec());
            let out = f(g, &bound, &v[..n])?;
            weighted_sum(g, out, seed)
        },
        &all,
        tol,
        Probe::All,
    )
}

/// Feature maps are drawn from `U(0, 1)`, like post-activation features;
/// language rows stay zero-mean.
pub fn module_checks(opts: &SuiteOptions) -> Result<Vec<GradCheckReport>> {
    const C: usize = 8;
    let s = opts.seed;
    let r = |shape: &[usize], k: u64| {
        let t = rand_t(shape, s.wrapping_mul(1000).wrapping_add(500 + k));
        if shape.len() == 3 {
            t.map(|v| 0.5 + 0.5 * v)
        } else {
            t
        }
    };
    let mut c = Checker {
        opts,
        reports: Vec::new(),
    };
    let fresh = |k: u64| (ParamStore::new(), Init::new(s.wrapping_add(k)));

    let (mut st, mut init) = fresh(1);
    let lcam = Lcam::new(&mut st, &mut init, "lcam", C);
    module_check(&mut c, "lcam", &st, vec![r(&[C, 4, 4], 1), r(&[1, C], 2)], |g, p, v| {
        Ok(lcam.forward(g, p, v[0], Some(v[1]))?.0)
    })?;
    module_check(&mut c, "lcam_no_language", &st, vec![r(&[C, 4, 4], 3)], |g, p, v| {
        Ok(lcam.forward(g, p, v[0], None)?.0)
    })?;

    let (mut st, mut init) = fresh(2);
    let alcm = Alcm::new(&mut st, &mut init, "alcm", C);
    module_check(&mut c, "alcm", &st, vec![r(&[C, 4, 4], 4), r(&[1, C], 5)], |g, p, v| {
        Ok(alcm.forward(g, p, v[0], v[1])?.0)
    })?;

    let (mut st, mut init) = fresh(3);
    let lsca = Lsca::new(&mut st, &mut init, "lsca", C);
    module_check(&mut c, "lsca", &st, vec![r(&[C, 4, 4], 6), r(&[1, C], 7)], |g, p, v| {
        Ok(lsca.forward(g, p, v[0], Some(v[1]))?.0)
    })?;

    let (mut st, mut init) = fresh(4);
    let lsct = Lsct::new(&mut st, &mut init, "lsct", C, false);
    module_check(&mut c, "lsct", &st, vec![r(&[C, 4, 4], 8), r(&[1, C], 9)], |g, p, v| {
        lsct.forward(g, p, v[0], Some(v[1]))
    })?;

    let (mut st, mut init) = fresh(5);
    let mfdm = Mfdm::new(&mut st, &mut init, "mfdm", C, &MfdmConfig::default())?;
    module_check(
        &mut c,
        "mfdm",
        &st,
        vec![r(&[C, 4, 4], 10), r(&[C, 4, 4], 11)],
        |g, p, v| {
            let (t, rr) = mfdm.forward(g, p, v[0], v[1])?;
            g.concat(&[t, rr], 0)
        },
    )?;

    let (mut st, mut init) = fresh(6);
    let lasb = Lasb::new(&mut st, &mut init, "lasb", C, &MfdmConfig::default())?;
    module_check(
        &mut c,
        "lasb",
        &st,
        vec![r(&[C, 8, 8], 12), r(&[C, 8, 8], 13), r(&[1, C], 14), r(&[1, C], 15)],
        |g, p, v| {
            let (t, rr) = lasb.forward(g, p, v[0], v[1], Some(v[2]), Some(v[3]))?;
            g.concat(&[t, rr], 0)
        },
    )?;

    let (mut st, mut init) = fresh(7);
    let enc = LanguageEncoder::new(&mut st, &mut init, "lang", 8, &[4, 6]);
    let vocab = crate::lang::Vocabulary::new(64, 8, s);
    module_check(&mut c, "language_encoder", &st, vec![], |g, p, _| {
        let feat = enc
            .encode(g, p, &vocab, Some("a red car near the glass"))?
            .expect("caption has tokens");
        let flat: Vec<Var> = feat.per_level.clone();
        g.concat(&flat, 1)
    })?;

    let (mut st, mut init) = fresh(8);
    let branch = PerceptionBranch::new(&mut st, &mut init, "perception", &[4, 4], true);
    let enc = LanguageEncoder::new(&mut st, &mut init, "lang", 8, &[4, 4]);
    module_check(&mut c, "perception_branch", &st, vec![r(&[3, 8, 8], 16)], |g, p, v| {
        let lt = enc.encode(g, p, &vocab, Some("a dog on the grass"))?;
        let lr = enc.encode(g, p, &vocab, Some("lamps in the window"))?;
        let feats = branch.forward(g, p, v[0], lt.as_ref(), lr.as_ref())?;
        let mut acc = Vec::new();
        for (t, rr) in feats {
            acc.push(weighted_sum(g, t, 1)?);
            acc.push(weighted_sum(g, rr, 2)?);
        }
        let mut total = acc[0];
        for &a in &acc[1..] {
            total = g.add(total, a)?;
        }
        Ok(total)
    })?;

    c.reports.push(loss_check(opts)?);
    Ok(c.reports)
}

/// `loss_total` with respect to both predictions at 3×8×8.
pub fn loss_check(opts: &SuiteOptions) -> Result<GradCheckReport> {
    let s = opts.seed.wrapping_mul(1000);
    let img = |k: u64| rand_t(&[3, 8, 8], s.wrapping_add(900 + k)).map(|v| 0.5 + 0.5 * v);
    let stub = PerceptualStub::new(&[4, 4, 4], opts.seed);
    let (gt_t, gt_r) = (img(3), img(4));
    grad_check_with(
        "loss_total",
        |g, v| {
            let pred = Prediction {
                t_hat: v[0],
                r_hat: v[1],
            };
            let (t, r) = (g.constant(gt_t.clone()), g.constant(gt_r.clone()));
            Ok(loss_total(g, pred, t, r, &LossWeights::default(), &stub)?.total)
        },
        &[img(1), img(2)],
        opts.h,
        opts.tol,
        Probe::All,
    )
}

/// Smallest configuration the five-level network accepts, for the
/// end-to-end check.
pub fn gradcheck_config(seed: u64) -> NetworkConfig {
    NetworkConfig {
        channels: vec![4; 5],
        blocks: vec![1; 5],
        kernel_sizes: vec![1, 3],
        seed,
        vocab_size: 64,
        embed_dim: 8,
        modules: ModuleFlags::default(),
    }
}

/// Image, captions, network and loss on a 3×16×16 input. Every parameter
/// tensor is probed at a few seeded elements.
pub fn end_to_end_check(opts: &SuiteOptions) -> Result<GradCheckReport> {
    let config = gradcheck_config(opts.seed);
    let (net, store) = Alanet::new(config.clone())?;
    let s = opts.seed.wrapping_mul(1000);
    let img = |k: u64| rand_t(&[3, 16, 16], s.wrapping_add(950 + k)).map(|v| 0.5 + 0.5 * v);
    let (gt_t, gt_r) = (img(1), img(2));
    let stub = PerceptualStub::for_config(&config);
    let mut inputs = vec![img(0)];
    inputs.extend(store.tensors().iter().cloned());
    grad_check_with(
        "end_to_end",
        |g, v| {
            let bound = Bound::from_vars(v[1..].to_vec());
            let pred = net.forward(
                g,
                &bound,
                v[0],
                Some("a red car on the road"),
                Some("trees behind glass"),
            )?;
            let (t, r) = (g.constant(gt_t.clone()), g.constant(gt_r.clone()));
            Ok(loss_total(g, pred, t, r, &LossWeights::default(), &stub)?.total)
        },
        &inputs,
        opts.h,
        opts.end_to_end_tol,
        Probe::Sample {
            per_input: 4,
            seed: opts.seed,
        },
    )
}

/// Every check above, operations first.
pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<GradCheckReport>> {
    let mut reports = op_checks(opts)?;
    reports.extend(module_checks(opts)?);
    reports.push(end_to_end_check(opts)?);
    Ok(reports)
}
