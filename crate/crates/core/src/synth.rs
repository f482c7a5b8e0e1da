//! Reflection synthesis: `I = clip(α·T + (1−α)·blur(R))`.

use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

/// Synthesised training triplet.
#[derive(Clone, Debug)]
pub struct ImagePair {
    pub input: Tensor,
    pub transmission: Tensor,
    pub reflection: Tensor,
    pub alpha: f64,
    pub sigma: f64,
    pub seed: u64,
}

/// 1-D Gaussian taps with radius `ceil(3σ)`, normalised to sum 1.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Config(format!("blur sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    Ok(k)
}

fn blur_axis(src: &[f64], dst: &mut [f64], c: usize, h: usize, w: usize, k: &[f64], along_rows: bool) {
    let r = (k.len() / 2) as i64;
    let (n, stride) = if along_rows { (w, 1) } else { (h, w) };
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let pos = if along_rows { x } else { y } as i64;
                let origin = ch * h * w + y * w + x - (pos as usize) * stride;
                let mut acc = 0.0;
                for (t, kv) in k.iter().enumerate() {
                    let q = (pos + t as i64 - r).clamp(0, n as i64 - 1) as usize;
                    acc += kv * src[origin + q * stride];
                }
                dst[ch * h * w + y * w + x] = acc;
            }
        }
    }
}

/// Separable Gaussian blur per channel with edge-clamped borders.
pub fn gaussian_blur(image: &Tensor, sigma: f64) -> Result<Tensor> {
    let (c, h, w) = image.chw()?;
    let k = gaussian_kernel(sigma)?;
    let mut tmp = vec![0.0; image.numel()];
    let mut out = vec![0.0; image.numel()];
    blur_axis(image.data(), &mut tmp, c, h, w, &k, true);
    blur_axis(&tmp, &mut out, c, h, w, &k, false);
    Tensor::new([c, h, w], out)
}

pub fn blend(t: &Tensor, r: &Tensor, alpha: f64, sigma: f64) -> Result<Tensor> {
    if t.shape() != r.shape() {
        return dim_err(format!("T {:?} and R {:?} differ", t.shape(), r.shape()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let blurred = gaussian_blur(r, sigma)?;
    let data = t
        .data()
        .iter()
        .zip(blurred.data())
        .map(|(a, b)| (alpha * a + (1.0 - alpha) * b).clamp(0.0, 1.0))
        .collect();
    Tensor::new(t.shape(), data)
}

/// Largest centred square.
pub fn center_crop_square(image: &Tensor) -> Result<Tensor> {
    let (c, h, w) = image.chw()?;
    let s = h.min(w);
    let (oy, ox) = ((h - s) / 2, (w - s) / 2);
    let d = image.data();
    Tensor::from_fn([c, s, s], |i| {
        let (ch, y, x) = (i / (s * s), (i / s) % s, i % s);
        d[ch * h * w + (y + oy) * w + x + ox]
    })
}

/// Nearest-neighbour resize; source index `floor((i + 0.5)·src/dst)`.
pub fn resize_nearest(image: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = image.chw()?;
    if out_h == 0 || out_w == 0 {
        return dim_err("resize target must be non-empty");
    }
    let d = image.data();
    let pick = |i: usize, src: usize, dst: usize| (((2 * i + 1) * src) / (2 * dst)).min(src - 1);
    Tensor::from_fn([c, out_h, out_w], |i| {
        let (ch, y, x) = (i / (out_h * out_w), (i / out_w) % out_h, i % out_w);
        d[ch * h * w + pick(y, h, out_h) * w + pick(x, w, out_w)]
    })
}
