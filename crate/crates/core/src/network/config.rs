use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEVELS: usize = 5;

/// Switches for the ablation grid; every module is on by default.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModuleFlags {
    pub alcm: bool,
    pub lsct: bool,
    pub lcam_language: bool,
    pub lcam_channel: bool,
}

impl Default for ModuleFlags {
    fn default() -> Self {
        Self {
            alcm: true,
            lsct: true,
            lcam_language: true,
            lcam_channel: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Channel widths `C_0..C_4`.
    pub channels: Vec<usize>,
    /// Separation blocks per level `N_0..N_4`.
    pub blocks: Vec<usize>,
    /// Receptive fields of the decoupling module, one channel group each.
    pub kernel_sizes: Vec<usize>,
    pub seed: u64,
    /// Hash buckets of the caption embedding table.
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub modules: ModuleFlags,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl NetworkConfig {
    /// Desk-scale configuration used by tests and the CLI defaults.
    pub fn toy() -> Self {
        Self {
            channels: vec![8, 16, 16, 16, 16],
            blocks: vec![1; LEVELS],
            kernel_sizes: vec![1, 3, 5, 7],
            seed: 0,
            vocab_size: 4096,
            embed_dim: 64,
            modules: ModuleFlags::default(),
        }
    }

    /// Full-size widths and block counts. Constructible, not exercised.
    pub fn full_scale() -> Self {
        Self {
            channels: vec![64, 128, 128, 160, 160],
            blocks: vec![2; LEVELS],
            ..Self::toy()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != LEVELS || self.blocks.len() != LEVELS {
            return Err(Error::Config(format!(
                "expected {LEVELS} channel widths and block counts, got {} and {}",
                self.channels.len(),
                self.blocks.len()
            )));
        }
        if self.channels.iter().chain(&self.blocks).any(|&v| v == 0) {
            return Err(Error::Config("channel widths and block counts must be positive".into()));
        }
        if self.vocab_size == 0 || self.embed_dim == 0 {
            return Err(Error::Config(
                "vocabulary size and embedding width must be positive".into(),
            ));
        }
        for &c in &self.channels {
            crate::attention::MfdmConfig::new(self.kernel_sizes.clone()).groups(c)?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        NetworkConfig::toy().validate().unwrap();
        NetworkConfig::full_scale().validate().unwrap();
    }

    #[test]
    fn rejects_bad_lengths_and_zeros() {
        let mut c = NetworkConfig::toy();
        c.channels.pop();
        assert!(c.validate().is_err());
        let mut c = NetworkConfig::toy();
        c.blocks[2] = 0;
        assert!(c.validate().is_err());
        let mut c = NetworkConfig::toy();
        c.channels[0] = 2; // fewer channels than kernel groups
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = NetworkConfig::toy();
        c.modules.alcm = false;
        c.seed = 99;
        assert_eq!(NetworkConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = NetworkConfig::from_toml("seed = 5\n").unwrap();
        assert_eq!(partial.seed, 5);
        assert_eq!(partial.channels, NetworkConfig::toy().channels);
    }
}
