use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, LrSchedule};
use super::loss::{loss_total, LossWeights, PerceptualStub};
use super::quality::{psnr, ssim};
use crate::csv_out::write_csv;
use crate::dataset::{read_manifest, resolve};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::network::{Alanet, NetworkConfig};
use crate::params::ParamStore;
use crate::ppm::read_ppm;
use crate::tensor::Tensor;

/// Which captions a run feeds to the network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionMode {
    #[default]
    Both,
    /// Transmission caption only.
    One,
    None,
}

impl CaptionMode {
    pub fn apply<'a>(self, t: Option<&'a str>, r: Option<&'a str>) -> (Option<&'a str>, Option<&'a str>) {
        match self {
            CaptionMode::Both => (t, r),
            CaptionMode::One => (t, None),
            CaptionMode::None => (None, None),
        }
    }
}

impl std::str::FromStr for CaptionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(Self::Both),
            "one" => Ok(Self::One),
            "none" => Ok(Self::None),
            _ => Err(Error::Config(format!("unknown caption mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lr_final: f64,
    /// Fraction of the epochs after which the rate drops to `lr_final`.
    pub lr_drop_fraction: f64,
    pub weights: LossWeights,
    pub flip: bool,
    /// Per-source sampling weights; `None` visits every sample once per epoch.
    pub mixture: Option<Vec<f64>>,
    pub captions: CaptionMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            lr: 1e-4,
            lr_final: 1e-5,
            lr_drop_fraction: 5.0 / 7.0,
            weights: LossWeights::default(),
            flip: true,
            mixture: None,
            captions: CaptionMode::Both,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub input: Tensor,
    pub transmission: Tensor,
    pub reflection: Tensor,
    pub caption_t: Option<String>,
    pub caption_r: Option<String>,
    pub source: usize,
}

impl Sample {
    fn flipped(&self) -> Self {
        Self {
            input: self.input.flip_horizontal(),
            transmission: self.transmission.flip_horizontal(),
            reflection: self.reflection.flip_horizontal(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub total: f64,
    #[serde(rename = "mse_T")]
    pub mse_t: f64,
    #[serde(rename = "mse_R")]
    pub mse_r: f64,
    pub grad: f64,
    pub perceptual: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub trace: Vec<LossRecord>,
}

impl TrainReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(path, &self.trace)
    }
}

/// Loads every readable manifest entry; unreadable ones are skipped with a
/// warning. Fails when nothing is left.
pub fn load_samples(manifest: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let manifest = manifest.as_ref();
    let records = read_manifest(manifest)?;
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let load = |p: &str| read_ppm(resolve(manifest, p));
        match (load(&rec.path_i), load(&rec.path_t), load(&rec.path_r)) {
            (Ok(input), Ok(transmission), Ok(reflection)) => out.push(Sample {
                id: rec.id,
                input,
                transmission,
                reflection,
                caption_t: rec.caption_t,
                caption_r: rec.caption_r,
                source: rec.source,
            }),
            (a, b, c) => {
                let err = [a.err(), b.err(), c.err()].into_iter().flatten().next();
                log::warn!(
                    "skipping manifest entry {}: {}",
                    rec.id,
                    err.map(|e| e.to_string()).unwrap_or_default()
                );
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("no readable entries in {}", manifest.display())));
    }
    Ok(out)
}

fn epoch_order(samples: &[Sample], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    let Some(weights) = &cfg.mixture else {
        return Ok(order);
    };
    let sources = weights.len();
    let mut by_source: Vec<Vec<usize>> = vec![Vec::new(); sources];
    for &i in &order {
        if let Some(bucket) = by_source.get_mut(samples[i].source) {
            bucket.push(i);
        }
    }
    let live: Vec<f64> = weights
        .iter()
        .zip(&by_source)
        .map(|(&w, b)| if b.is_empty() { 0.0 } else { w })
        .collect();
    let dist = WeightedIndex::new(&live).map_err(|e| Error::Config(format!("mixture weights {weights:?}: {e}")))?;
    Ok((0..samples.len())
        .map(|_| {
            let bucket = &by_source[dist.sample(rng)];
            bucket[rng.gen_range(0..bucket.len())]
        })
        .collect())
}

/// Batch-size-1 Adam training. Updates `params` in place.
pub fn train(net: &Alanet, params: &mut ParamStore, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stub = PerceptualStub::for_config(net.config());
    let schedule = LrSchedule::with_fraction(cfg.lr, cfg.lr_final, cfg.epochs, cfg.lr_drop_fraction);
    let mut adam = Adam::new(params);
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let lr = schedule.rate(epoch);
        for idx in epoch_order(samples, cfg, &mut rng)? {
            let flip = cfg.flip && rng.gen_bool(0.5);
            let flipped;
            let s = if flip {
                flipped = samples[idx].flipped();
                &flipped
            } else {
                &samples[idx]
            };
            let (ct, cr) = cfg.captions.apply(s.caption_t.as_deref(), s.caption_r.as_deref());

            let mut g = Graph::new();
            let bound = params.bind(&mut g, true);
            let x = g.constant(s.input.clone());
            let gt_t = g.constant(s.transmission.clone());
            let gt_r = g.constant(s.reflection.clone());
            let pred = net.forward(&mut g, &bound, x, ct, cr)?;
            let terms = loss_total(&mut g, pred, gt_t, gt_r, &cfg.weights, &stub)?;
            g.backward(terms.total)?;
            let grads = bound.grads(&g);
            adam.step(params, &grads, lr);
            report.trace.push(LossRecord {
                iteration: report.trace.len(),
                total: g.scalar_value(terms.total)?,
                mse_t: g.scalar_value(terms.mse_t)?,
                mse_r: g.scalar_value(terms.mse_r)?,
                grad: g.scalar_value(terms.grad)?,
                perceptual: g.scalar_value(terms.perceptual)?,
            });
            log::debug!(
                "epoch {epoch} iteration {} loss {:.6}",
                report.trace.len() - 1,
                report.trace.last().unwrap().total
            );
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRecord {
    pub image_id: String,
    pub psnr: f64,
    pub ssim: f64,
}

impl EvalRecord {
    pub fn write_csv(path: impl AsRef<Path>, records: &[EvalRecord]) -> Result<()> {
        write_csv(path, records)
    }
}

/// PSNR and SSIM of the clamped transmission estimate against ground truth.
pub fn evaluate(
    net: &Alanet,
    params: &ParamStore,
    samples: &[Sample],
    captions: CaptionMode,
) -> Result<Vec<EvalRecord>> {
    samples
        .iter()
        .map(|s| {
            let (ct, cr) = captions.apply(s.caption_t.as_deref(), s.caption_r.as_deref());
            let pred = net.predict(params, &s.input, ct, cr)?.clamped();
            Ok(EvalRecord {
                image_id: s.id.clone(),
                psnr: psnr(&pred.t_hat, &s.transmission)?,
                ssim: ssim(&pred.t_hat, &s.transmission)?,
            })
        })
        .collect()
}

/// Config-file layout shared by the command-line tools: a `[network]` and a
/// `[train]` table, both optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.network.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }
}
