//! Flat binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4 | magic `ALNK` |
//! | 4 | format version (`u32`) |
//! | 8 | scalar parameter count `n` (`u64`) |
//! | 8·n | parameters as `f64`, in declaration order |
//! | 8 | config length `m` (`u64`) |
//! | m | network config as UTF-8 TOML |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::ParamStore;

use super::{Alanet, NetworkConfig};

pub const MAGIC: &[u8; 4] = b"ALNK";
pub const VERSION: u32 = 1;

pub fn encode(config: &NetworkConfig, params: &ParamStore) -> Vec<u8> {
    let values = params.flatten();
    let text = config.to_toml();
    let mut out = Vec::with_capacity(24 + 8 * values.len() + text.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!("truncated checkpoint: missing {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses a checkpoint into its config and flat parameter values.
pub fn decode(bytes: &[u8]) -> Result<(NetworkConfig, Vec<f64>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "bad magic, expected ALNK".into(),
        });
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Parse {
            offset: 4,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let count = r.u64("parameter count")? as usize;
    if count > (bytes.len() - r.pos) / 8 {
        return Err(Error::Parse {
            offset: r.pos,
            message: format!("truncated checkpoint: {count} parameters announced"),
        });
    }
    let raw = r.take(8 * count, "parameters")?;
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let len = r.u64("config length")? as usize;
    let at = r.pos;
    let text = std::str::from_utf8(r.take(len, "config")?).map_err(|e| Error::Parse {
        offset: at + e.valid_up_to(),
        message: "config is not UTF-8".into(),
    })?;
    if r.pos != bytes.len() {
        return Err(Error::Parse {
            offset: r.pos,
            message: "trailing bytes after config".into(),
        });
    }
    Ok((NetworkConfig::from_toml(text)?, values))
}

pub fn save(path: impl AsRef<Path>, config: &NetworkConfig, params: &ParamStore) -> Result<()> {
    fs::write(path, encode(config, params))?;
    Ok(())
}

/// Rebuilds the network from a checkpoint and loads its parameters.
pub fn load(path: impl AsRef<Path>) -> Result<(Alanet, ParamStore)> {
    let (config, values) = decode(&fs::read(path)?)?;
    let (net, mut params) = Alanet::new(config)?;
    params.load_flat(&values)?;
    Ok((net, params))
}
