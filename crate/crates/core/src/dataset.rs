//! Synthetic paired datasets and their JSONL manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ppm;
use crate::synth::{blend, center_crop_square, resize_nearest};
use crate::tensor::Tensor;

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// One manifest line. Relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    #[serde(rename = "path_I")]
    pub path_i: String,
    #[serde(rename = "path_T")]
    pub path_t: String,
    #[serde(rename = "path_R")]
    pub path_r: String,
    pub alpha: f64,
    pub sigma: f64,
    #[serde(rename = "caption_T", default)]
    pub caption_t: Option<String>,
    #[serde(rename = "caption_R", default)]
    pub caption_r: Option<String>,
    /// Index of the data source, used for mixture sampling.
    #[serde(default)]
    pub source: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthOptions {
    pub patch: usize,
    pub alpha_range: (f64, f64),
    pub sigma_range: (f64, f64),
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            patch: 32,
            alpha_range: (0.6, 0.85),
            sigma_range: (1.0, 5.0),
        }
    }
}

struct SourceImage {
    image: Tensor,
    caption: Option<String>,
}

fn read_caption(path: &Path) -> Option<String> {
    let text = fs::read_to_string(path.with_extension("txt")).ok()?;
    let line = text.lines().next()?.trim();
    (!line.is_empty()).then(|| line.to_string())
}

/// Readable `.ppm` files under `dir`, sorted by file name. Unreadable files
/// are skipped with a warning.
fn load_sources(dir: &Path, patch: usize) -> Result<Vec<SourceImage>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        match ppm::read_ppm(&path) {
            Ok(img) => {
                let image = resize_nearest(&center_crop_square(&img)?, patch, patch)?;
                out.push(SourceImage {
                    image,
                    caption: read_caption(&path),
                });
            }
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    Ok(out)
}

/// Blends `n_pairs` seeded T/R pairs drawn from the PPM images in
/// `source_dir` and writes `<id>_{I,T,R}.ppm` plus `manifest.jsonl` to
/// `out_dir`. Captions come from optional `<stem>.txt` sidecars.
pub fn make_dataset(
    source_dir: impl AsRef<Path>,
    n_pairs: usize,
    seed: u64,
    out_dir: impl AsRef<Path>,
    opts: &SynthOptions,
) -> Result<Vec<ManifestRecord>> {
    let out_dir = out_dir.as_ref();
    if n_pairs == 0 {
        return Ok(Vec::new());
    }
    if opts.patch == 0 {
        return Err(Error::Config("patch size must be positive".into()));
    }
    let sources = load_sources(source_dir.as_ref(), opts.patch)?;
    if sources.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 readable source images, found {}",
            sources.len()
        )));
    }
    fs::create_dir_all(out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_pairs);
    for k in 0..n_pairs {
        let pick = sample(&mut rng, sources.len(), 2);
        let (st, sr) = (&sources[pick.index(0)], &sources[pick.index(1)]);
        let alpha = rng.gen_range(opts.alpha_range.0..=opts.alpha_range.1);
        let sigma = rng.gen_range(opts.sigma_range.0..=opts.sigma_range.1);
        let input = ppm::quantize(&blend(&st.image, &sr.image, alpha, sigma)?);

        let id = format!("pair{k:05}");
        let names = [format!("{id}_I.ppm"), format!("{id}_T.ppm"), format!("{id}_R.ppm")];
        for (name, img) in names.iter().zip([&input, &st.image, &sr.image]) {
            ppm::write_ppm(img, out_dir.join(name))?;
        }
        let [path_i, path_t, path_r] = names;
        records.push(ManifestRecord {
            id,
            path_i,
            path_t,
            path_r,
            alpha,
            sigma,
            caption_t: st.caption.clone(),
            caption_r: sr.caption.clone(),
            source: 0,
        });
    }
    write_manifest(out_dir.join(MANIFEST_NAME), &records)?;
    Ok(records)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if !line.trim().is_empty() {
            let rec = serde_json::from_str(line).map_err(|e| Error::Parse {
                offset,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        offset += line.len();
    }
    Ok(records)
}

/// Resolves a manifest path relative to the manifest's directory.
pub fn resolve(manifest: &Path, entry: &str) -> PathBuf {
    let p = Path::new(entry);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new(".")).join(p)
    }
}
