//! Caption encoder: a seeded hash embedding with one trainable adapter per
//! network level.
//!
//! Tokens are hashed into a fixed table, mean pooled and mapped to each
//! level's width. The table itself is frozen; only the adapters train.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::layers::Dense;
use crate::network::NetworkConfig;
use crate::params::{Bound, Init, ParamStore};
use crate::tensor::Tensor;

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub(crate) fn fnv1a(token: &str) -> u64 {
    token.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Clone, Debug)]
pub struct Vocabulary {
    size: usize,
    seed: u64,
    table: Tensor,
}

impl Vocabulary {
    pub fn new(size: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a4e);
        let data = (0..size * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self {
            size,
            seed,
            table: Tensor::from_parts(vec![size, dim], data),
        }
    }

    pub fn for_config(config: &NetworkConfig) -> Self {
        Self::new(config.vocab_size, config.embed_dim, config.seed)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn table(&self) -> &Tensor {
        &self.table
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token) % self.size as u64) as usize
    }

    pub fn embedding(&self, token: &str) -> &[f64] {
        let d = self.dim();
        let b = self.bucket(token);
        &self.table.data()[b * d..(b + 1) * d]
    }

    /// Mean embedding of `tokens` as a `1×d` row, or `None` for no tokens.
    /// Buckets are summed in sorted order so token order cannot change a bit.
    pub fn mean_embedding(&self, tokens: &[String]) -> Option<Tensor> {
        if tokens.is_empty() {
            return None;
        }
        let d = self.dim();
        let mut buckets: Vec<usize> = tokens.iter().map(|t| self.bucket(t)).collect();
        buckets.sort_unstable();
        let mut acc = vec![0.0; d];
        for b in buckets {
            for (a, &v) in acc.iter_mut().zip(&self.table.data()[b * d..(b + 1) * d]) {
                *a += v;
            }
        }
        let n = tokens.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Some(Tensor::from_parts(vec![1, d], acc))
    }
}

/// Per-level language features of one caption, living on a tape.
#[derive(Clone, Debug)]
pub struct LanguageFeature {
    /// `1×C_l` rows, one per level.
    pub per_level: Vec<Var>,
    pub token_count: usize,
    pub source_text: String,
}

impl LanguageFeature {
    pub fn level(&self, l: usize) -> Var {
        self.per_level[l]
    }

    pub fn values(&self, g: &Graph) -> Vec<Tensor> {
        self.per_level.iter().map(|&v| g.value(v).clone()).collect()
    }
}

/// Trainable adapters from the embedding width to every level width.
#[derive(Clone, Debug)]
pub struct LanguageEncoder {
    adapters: Vec<Dense>,
}

impl LanguageEncoder {
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, embed_dim: usize, widths: &[usize]) -> Self {
        let adapters = widths
            .iter()
            .enumerate()
            .map(|(l, &c)| Dense::new(store, init, &format!("{name}.adapter{l}"), embed_dim, c))
            .collect();
        Self { adapters }
    }

    pub fn levels(&self) -> usize {
        self.adapters.len()
    }

    /// `None` (or a caption without tokens) yields `None`: no language.
    pub fn encode(
        &self,
        g: &mut Graph,
        p: &Bound,
        vocab: &Vocabulary,
        text: Option<&str>,
    ) -> Result<Option<LanguageFeature>> {
        let Some(text) = text else { return Ok(None) };
        let tokens = tokenize(text);
        let Some(mean) = vocab.mean_embedding(&tokens) else {
            return Ok(None);
        };
        let pooled = g.constant(mean);
        let per_level = self
            .adapters
            .iter()
            .map(|a| a.forward(g, p, pooled))
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(LanguageFeature {
            per_level,
            token_count: tokens.len(),
            source_text: text.to_string(),
        }))
    }
}
