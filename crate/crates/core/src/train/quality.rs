//! PSNR and SSIM on `[0, 1]` RGB tensors.

use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

pub const PSNR_CAP_DB: f64 = 99.0;

const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// `10·log10(1/MSE)` after clamping both images to `[0, 1]`; capped at 99 dB.
pub fn psnr(x: &Tensor, y: &Tensor) -> Result<f64> {
    if x.shape() != y.shape() {
        return dim_err(format!("shapes {:?} and {:?} differ", x.shape(), y.shape()));
    }
    let mse = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a.clamp(0.0, 1.0) - b.clamp(0.0, 1.0)).powi(2))
        .sum::<f64>()
        / x.numel() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Normalised `size×size` Gaussian window, row-major.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let mut w: Vec<f64> = g.iter().flat_map(|a| g.iter().map(move |b| a * b)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// SSIM with an 11×11, σ = 1.5 Gaussian window, dynamic range 1,
/// averaged over valid window positions and then over channels.
pub fn ssim(x: &Tensor, y: &Tensor) -> Result<f64> {
    ssim_with_window(x, y, 11, 1.5)
}

pub fn ssim_with_window(x: &Tensor, y: &Tensor, size: usize, sigma: f64) -> Result<f64> {
    if x.shape() != y.shape() {
        return dim_err(format!("shapes {:?} and {:?} differ", x.shape(), y.shape()));
    }
    let (c, h, w) = x.chw()?;
    if h < size || w < size {
        return Err(Error::Config(format!(
            "{h}×{w} image is smaller than the {size}×{size} SSIM window"
        )));
    }
    let win = gaussian_window(size, sigma);
    let (c1, c2) = (K1 * K1, K2 * K2);
    let (xd, yd) = (x.data(), y.data());
    let mut total = 0.0;
    for ch in 0..c {
        let base = ch * h * w;
        let mut acc = 0.0;
        for oy in 0..=h - size {
            for ox in 0..=w - size {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for ky in 0..size {
                    for kx in 0..size {
                        let wt = win[ky * size + kx];
                        let i = base + (oy + ky) * w + ox + kx;
                        let (a, b) = (xd[i], yd[i]);
                        mx += wt * a;
                        my += wt * b;
                        xx += wt * a * a;
                        yy += wt * b * b;
                        xy += wt * a * b;
                    }
                }
                let (vx, vy, cov) = (xx - mx * mx, yy - my * my, xy - mx * my);
                acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
        total += acc / ((h - size + 1) * (w - size + 1)) as f64;
    }
    Ok(total / c as f64)
}
