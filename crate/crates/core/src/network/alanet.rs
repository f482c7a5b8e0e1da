use crate::attention::{Alcm, Lasb, MfdmConfig};
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::lang::{LanguageEncoder, LanguageFeature, Vocabulary};
use crate::layers::Conv;
use crate::params::{Bound, Init, ParamStore};
use crate::tensor::Tensor;

use super::config::{NetworkConfig, LEVELS};
use super::perception::PerceptionBranch;

/// Network outputs on a tape.
#[derive(Clone, Copy, Debug)]
pub struct Prediction {
    pub t_hat: Var,
    pub r_hat: Var,
}

/// Reconstructed transmission and reflection layers, `3×H×W` each.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerPrediction {
    pub t_hat: Tensor,
    pub r_hat: Tensor,
}

impl LayerPrediction {
    /// Outputs clamped to `[0, 1]` for evaluation and export.
    pub fn clamped(&self) -> Self {
        Self {
            t_hat: self.t_hat.clamp(0.0, 1.0),
            r_hat: self.r_hat.clamp(0.0, 1.0),
        }
    }
}

/// Calibration plus separation blocks at one resolution.
#[derive(Clone, Debug)]
struct Stage {
    alcm_t: Option<Alcm>,
    alcm_r: Option<Alcm>,
    blocks: Vec<Lasb>,
}

impl Stage {
    fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        channels: usize,
        count: usize,
        config: &NetworkConfig,
    ) -> Result<Self> {
        let mfdm = MfdmConfig::new(config.kernel_sizes.clone());
        let (alcm_t, alcm_r) = if config.modules.alcm {
            (
                Some(Alcm::new(store, init, &format!("{name}.alcm_t"), channels)),
                Some(Alcm::new(store, init, &format!("{name}.alcm_r"), channels)),
            )
        } else {
            (None, None)
        };
        let blocks = (0..count)
            .map(|b| {
                let mut blk = Lasb::new(store, init, &format!("{name}.block{b}"), channels, &mfdm)?;
                blk.set_flags(config.modules.lcam_language, config.modules.lcam_channel);
                Ok(blk)
            })
            .collect::<Result<_>>()?;
        Ok(Self { alcm_t, alcm_r, blocks })
    }

    fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        mut t: Var,
        mut r: Var,
        lang_t: Option<Var>,
        lang_r: Option<Var>,
    ) -> Result<(Var, Var)> {
        let calibrate = |g: &mut Graph, alcm: &Option<Alcm>, x: Var, l: Option<Var>| -> Result<Option<Var>> {
            match (alcm, l) {
                (Some(m), Some(l)) => Ok(Some(m.forward(g, p, x, l)?.0)),
                _ => Ok(l),
            }
        };
        let lang_t = calibrate(g, &self.alcm_t, t, lang_t)?;
        let lang_r = calibrate(g, &self.alcm_r, r, lang_r)?;
        for blk in &self.blocks {
            (t, r) = blk.forward(g, p, t, r, lang_t, lang_r)?;
        }
        Ok((t, r))
    }
}

#[derive(Clone, Debug)]
struct Pair {
    t: Conv,
    r: Conv,
}

impl Pair {
    fn new(store: &mut ParamStore, init: &mut Init, name: &str, c_in: usize, c_out: usize, stride: usize) -> Self {
        Self {
            t: Conv::new(store, init, &format!("{name}_t"), c_in, c_out, 3, stride),
            r: Conv::new(store, init, &format!("{name}_r"), c_in, c_out, 3, stride),
        }
    }
}

/// Five-level encoder–decoder with a transmission and a reflection stream.
///
/// Encoder levels 0–3 run their separation blocks and then downsample with
/// a stride-2 convolution; level 4 is the bottleneck. The decoder
/// upsamples (nearest neighbour + convolution), adds the matching encoder
/// skip and the decoupled perception features, and runs its own blocks.
/// Captions are encoded per level and calibrated against the image at
/// every stage before the blocks see them.
#[derive(Clone, Debug)]
pub struct Alanet {
    config: NetworkConfig,
    vocab: Vocabulary,
    language: LanguageEncoder,
    perception: PerceptionBranch,
    stem: Pair,
    encoder: Vec<Stage>,
    down: Vec<Pair>,
    bottleneck: Stage,
    up: Vec<Pair>,
    decoder: Vec<Stage>,
    head: Pair,
}

impl Alanet {
    /// Builds the architecture and its freshly initialised parameters.
    pub fn new(config: NetworkConfig) -> Result<(Self, ParamStore)> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut init = Init::new(config.seed);
        let ch = config.channels.clone();
        let nb = config.blocks.clone();

        let language = LanguageEncoder::new(&mut store, &mut init, "language", config.embed_dim, &ch);
        let perception = PerceptionBranch::new(&mut store, &mut init, "perception", &ch, config.modules.lsct);
        let stem = Pair::new(&mut store, &mut init, "stem", 3, ch[0], 1);
        let mut encoder = Vec::new();
        let mut down = Vec::new();
        for l in 0..LEVELS - 1 {
            encoder.push(Stage::new(
                &mut store,
                &mut init,
                &format!("enc{l}"),
                ch[l],
                nb[l],
                &config,
            )?);
            down.push(Pair::new(
                &mut store,
                &mut init,
                &format!("down{l}"),
                ch[l],
                ch[l + 1],
                2,
            ));
        }
        let bottleneck = Stage::new(&mut store, &mut init, "bottleneck", ch[4], nb[4], &config)?;
        let mut up = Vec::new();
        let mut decoder = Vec::new();
        for l in (0..LEVELS - 1).rev() {
            up.push(Pair::new(&mut store, &mut init, &format!("up{l}"), ch[l + 1], ch[l], 1));
            decoder.push(Stage::new(
                &mut store,
                &mut init,
                &format!("dec{l}"),
                ch[l],
                nb[l],
                &config,
            )?);
        }
        let head = Pair::new(&mut store, &mut init, "head", ch[0], 3, 1);
        let vocab = Vocabulary::for_config(&config);
        let net = Self {
            config,
            vocab,
            language,
            perception,
            stem,
            encoder,
            down,
            bottleneck,
            up,
            decoder,
            head,
        };
        Ok((net, store))
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn language(&self) -> &LanguageEncoder {
        &self.language
    }

    pub fn perception(&self) -> &PerceptionBranch {
        &self.perception
    }

    pub fn encode_caption(&self, g: &mut Graph, p: &Bound, text: Option<&str>) -> Result<Option<LanguageFeature>> {
        self.language.encode(g, p, &self.vocab, text)
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        image: Var,
        caption_t: Option<&str>,
        caption_r: Option<&str>,
    ) -> Result<Prediction> {
        let lang_t = self.encode_caption(g, p, caption_t)?;
        let lang_r = self.encode_caption(g, p, caption_r)?;
        let lt = |l: usize| lang_t.as_ref().map(|f| f.level(l));
        let lr = |l: usize| lang_r.as_ref().map(|f| f.level(l));

        let prior = self.perception.forward(g, p, image, lang_t.as_ref(), lang_r.as_ref())?;

        let t0 = self.stem.t.forward(g, p, image)?;
        let r0 = self.stem.r.forward(g, p, image)?;
        let (mut t, mut r) = (g.silu(t0)?, g.silu(r0)?);
        let mut skips = Vec::with_capacity(LEVELS - 1);
        for (l, (stage, down)) in self.encoder.iter().zip(&self.down).enumerate() {
            (t, r) = stage.forward(g, p, t, r, lt(l), lr(l))?;
            skips.push((t, r));
            let dt = down.t.forward(g, p, t)?;
            let dr = down.r.forward(g, p, r)?;
            (t, r) = (g.silu(dt)?, g.silu(dr)?);
        }

        let (pt, pr) = prior[LEVELS - 1];
        (t, r) = (g.add(t, pt)?, g.add(r, pr)?);
        (t, r) = self.bottleneck.forward(g, p, t, r, lt(LEVELS - 1), lr(LEVELS - 1))?;

        for (i, (stage, up)) in self.decoder.iter().zip(&self.up).enumerate() {
            let l = LEVELS - 2 - i;
            let ut = g.upsample2x(t)?;
            let ur = g.upsample2x(r)?;
            let ut = up.t.forward(g, p, ut)?;
            let ur = up.r.forward(g, p, ur)?;
            let (st, sr) = skips[l];
            let (pt, pr) = prior[l];
            let ut = g.add(ut, st)?;
            let ur = g.add(ur, sr)?;
            (t, r) = (g.add(ut, pt)?, g.add(ur, pr)?);
            (t, r) = stage.forward(g, p, t, r, lt(l), lr(l))?;
        }

        let t_hat = self.head.t.forward(g, p, t)?;
        let r_hat = self.head.r.forward(g, p, r)?;
        Ok(Prediction { t_hat, r_hat })
    }

    /// Forward pass without gradient bookkeeping. Outputs are not clamped.
    pub fn predict(
        &self,
        params: &ParamStore,
        image: &Tensor,
        caption_t: Option<&str>,
        caption_r: Option<&str>,
    ) -> Result<LayerPrediction> {
        let mut g = Graph::new();
        let p = params.bind(&mut g, false);
        let x = g.constant(image.clone());
        let pred = self.forward(&mut g, &p, x, caption_t, caption_r)?;
        Ok(LayerPrediction {
            t_hat: g.value(pred.t_hat).clone(),
            r_hat: g.value(pred.r_hat).clone(),
        })
    }
}
