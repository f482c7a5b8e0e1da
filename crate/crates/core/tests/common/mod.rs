//! Independent brute-force oracles shared by several test targets.
#![allow(dead_code)]

use std::collections::HashMap;

use alanet::caption::BLEU_EPSILON;
use alanet::Tensor;

pub fn all_subsequences(t: &[String]) -> Vec<Vec<String>> {
    (0u32..1 << t.len())
        .map(|mask| {
            (0..t.len())
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| t[i].clone())
                .collect()
        })
        .collect()
}

pub fn lcs_brute(a: &[String], b: &[String]) -> usize {
    let sb = all_subsequences(b);
    all_subsequences(a)
        .into_iter()
        .filter(|s| sb.contains(s))
        .map(|s| s.len())
        .max()
        .unwrap_or(0)
}

pub fn counts(t: &[String], n: usize) -> HashMap<Vec<String>, usize> {
    let mut m = HashMap::new();
    for i in 0..(t.len() + 1).saturating_sub(n) {
        *m.entry(t[i..i + n].to_vec()).or_insert(0) += 1;
    }
    m
}

pub fn clipped(c: &[String], r: &[String], n: usize) -> (usize, usize, usize) {
    let (cc, rc) = (counts(c, n), counts(r, n));
    let m = cc.iter().map(|(g, k)| (*k).min(*rc.get(g).unwrap_or(&0))).sum();
    (m, cc.values().sum(), rc.values().sum())
}

/// Enumerates every one-to-one exact alignment.
pub fn meteor_brute(c: &[String], r: &[String]) -> f64 {
    fn go(
        i: usize,
        c: &[String],
        r: &[String],
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        best: &mut (usize, usize),
    ) {
        if i == c.len() {
            let m = cur.len();
            let chunks = (0..m)
                .filter(|&k| k == 0 || !(cur[k - 1].0 + 1 == cur[k].0 && cur[k - 1].1 + 1 == cur[k].1))
                .count();
            if m > best.0 || (m == best.0 && chunks < best.1) {
                *best = (m, chunks);
            }
            return;
        }
        go(i + 1, c, r, used, cur, best);
        for j in 0..r.len() {
            if !used[j] && r[j] == c[i] {
                used[j] = true;
                cur.push((i, j));
                go(i + 1, c, r, used, cur, best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (0, usize::MAX);
    go(0, c, r, &mut vec![false; r.len()], &mut Vec::new(), &mut best);
    if best.0 == 0 {
        return 0.0;
    }
    let m = best.0 as f64;
    let (p, rec) = (m / c.len() as f64, m / r.len() as f64);
    let f = 10.0 * p * rec / (rec + 9.0 * p);
    f * (1.0 - 0.5 * (best.1 as f64 / m).powi(3))
}

pub fn bleu_brute(c: &[String], r: &[String]) -> f64 {
    let n_max = 4.min(c.len());
    if n_max == 0 || r.is_empty() {
        return 0.0;
    }
    let mut prod = 1.0;
    for n in 1..=n_max {
        let (m, total, _) = clipped(c, r, n);
        prod *= if m == 0 { BLEU_EPSILON } else { m as f64 / total as f64 };
    }
    let bp = if c.len() > r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    bp * prod.powf(1.0 / n_max as f64)
}

pub fn rouge_n_brute(c: &[String], r: &[String], n: usize) -> f64 {
    let (m, _, total) = clipped(c, r, n);
    if total == 0 {
        0.0
    } else {
        m as f64 / total as f64
    }
}

pub fn rouge_l_brute(c: &[String], r: &[String]) -> f64 {
    let lcs = lcs_brute(c, r);
    if lcs == 0 {
        return 0.0;
    }
    let (p, q) = (lcs as f64 / c.len() as f64, lcs as f64 / r.len() as f64);
    9.0 * p * q / (q + 8.0 * p)
}

/// Direct 2-D weighted sum with the outer-product kernel and clamped borders.
pub fn blur_oracle(img: &Tensor, sigma: f64) -> Tensor {
    let (c, h, w) = img.chw().unwrap();
    let r = (3.0 * sigma).ceil() as i64;
    let mut k1 = vec![];
    for i in -r..=r {
        k1.push((-(i * i) as f64 / (2.0 * sigma * sigma)).exp());
    }
    let s: f64 = k1.iter().sum();
    let k1: Vec<f64> = k1.iter().map(|v| v / s).collect();
    Tensor::from_fn([c, h, w], |i| {
        let (ch, y, x) = (i / (h * w), (i / w) % h, i % w);
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                acc += k1[(dy + r) as usize] * k1[(dx + r) as usize] * img.at(&[ch, yy, xx]);
            }
        }
        acc
    })
    .unwrap()
}

pub fn blend_oracle(t: &Tensor, r: &Tensor, alpha: f64, sigma: f64) -> Tensor {
    let b = blur_oracle(r, sigma);
    Tensor::from_fn(t.shape(), |i| {
        (alpha * t.data()[i] + (1.0 - alpha) * b.data()[i]).clamp(0.0, 1.0)
    })
    .unwrap()
}

pub fn naive_psnr(x: &Tensor, y: &Tensor) -> f64 {
    let n = x.numel() as f64;
    let mut acc = 0.0;
    for (a, b) in x.data().iter().zip(y.data()) {
        let d = a.clamp(0.0, 1.0) - b.clamp(0.0, 1.0);
        acc += d * d;
    }
    if acc == 0.0 {
        return 99.0;
    }
    (10.0 * (1.0 / (acc / n)).log10()).min(99.0)
}

/// Per-window SSIM computed straight from the definition with explicit loops.
pub fn naive_ssim(x: &Tensor, y: &Tensor, size: usize, sigma: f64) -> f64 {
    let (c, h, w) = x.chw().unwrap();
    let half = (size as f64 - 1.0) / 2.0;
    let mut win = vec![vec![0.0; size]; size];
    let mut z = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - half, j as f64 - half);
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            z += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut per_channel = 0.0;
    for ch in 0..c {
        let mut acc = 0.0;
        let mut count = 0.0;
        for oy in 0..=h - size {
            for ox in 0..=w - size {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (i, row) in win.iter().enumerate() {
                    for (j, wv) in row.iter().enumerate() {
                        let wt = wv / z;
                        let a = x.at(&[ch, oy + i, ox + j]);
                        let b = y.at(&[ch, oy + i, ox + j]);
                        mx += wt * a;
                        my += wt * b;
                        sxx += wt * a * a;
                        syy += wt * b * b;
                        sxy += wt * a * b;
                    }
                }
                let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
        per_channel += acc / count;
    }
    per_channel / c as f64
}
