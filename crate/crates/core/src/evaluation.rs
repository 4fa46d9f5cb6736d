//! Domain-discrepancy and image-quality metrics.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::imaging::PairedDataset;
use crate::real::Real;
use crate::rng::{self, stream};
use crate::tensor::Tensor;

pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdEstimate {
    /// Unbiased squared MMD; may be slightly negative.
    pub value: f64,
    pub bandwidth: f64,
    pub m: usize,
    pub n: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len();
    let mid = n / 2;
    let (_, &mut hi, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Median pairwise Euclidean distance over the union of the given sets;
/// falls back to 1 when the median is 0.
pub fn median_bandwidth(sets: &[&[Vec<f64>]]) -> f64 {
    let all: Vec<&Vec<f64>> = sets.iter().flat_map(|s| s.iter()).collect();
    let mut d = Vec::with_capacity(all.len() * all.len().saturating_sub(1) / 2);
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            d.push(sq_dist(all[i], all[j]).sqrt());
        }
    }
    let h = median(d);
    if h > 0.0 && h.is_finite() {
        h
    } else {
        1.0
    }
}

/// Unbiased U-statistic of squared MMD with the Gaussian kernel
/// `exp(−‖x−y‖²/(2h²))`. `h` defaults to the median heuristic over the
/// merged sample. Sums run in a fixed order.
pub fn mmd_squared(a: &[Vec<f64>], b: &[Vec<f64>], bandwidth: Option<f64>) -> Result<MmdEstimate> {
    let (m, n) = (a.len(), b.len());
    if m < 2 || n < 2 {
        return Err(Error::InvalidArgument(format!("MMD needs >= 2 samples per set, got {m} and {n}")));
    }
    let dim = a[0].len();
    if a.iter().chain(b).any(|v| v.len() != dim) {
        return Err(shape_err("MMD sample vectors differ in dimension"));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::InvalidArgument(format!("bandwidth must be > 0, got {h}"))),
        None => median_bandwidth(&[a, b]),
    };
    let gamma = 1.0 / (2.0 * h * h);
    let k = |x: &[f64], y: &[f64]| (-gamma * sq_dist(x, y)).exp();
    let within = |s: &[Vec<f64>]| {
        let mut acc = 0.0;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                acc += k(&s[i], &s[j]);
            }
        }
        2.0 * acc / (s.len() * (s.len() - 1)) as f64
    };
    let mut cross = 0.0;
    for x in a {
        for y in b {
            cross += k(x, y);
        }
    }
    let value = within(a) + within(b) - 2.0 * cross / (m * n) as f64;
    Ok(MmdEstimate {
        value,
        bandwidth: h,
        m,
        n,
    })
}

fn check_same<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    a.ensure_same_dims(b, "metric inputs")
}

/// `10·log10(1/MSE)` for images in `[0,1]`, capped at 99 dB.
pub fn psnr<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    check_same(a, b)?;
    let n = a.data().len();
    if n == 0 {
        return Err(shape_err("PSNR of empty images"));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum::<f64>()
        / n as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Normalized 11×11 Gaussian, σ = 1.5, row-major.
pub fn ssim_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let mut w: Vec<f64> = g.iter().flat_map(|a| g.iter().map(move |b| a * b)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Mean SSIM over all valid window placements, averaged over channels.
pub fn ssim<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    check_same(a, b)?;
    let (c, h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(shape_err(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let win = ssim_window();
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for ch in 0..c {
        let pa = a.plane(ch);
        let pb = b.plane(ch);
        let mut acc = 0.0;
        for y in 0..oh {
            for x in 0..ow {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let g = win[dy * SSIM_WINDOW + dx];
                        let u = pa[(y + dy) * w + x + dx].as_f64();
                        let v = pb[(y + dy) * w + x + dx].as_f64();
                        ma += g * u;
                        mb += g * v;
                        saa += g * u * u;
                        sbb += g * v * v;
                        sab += g * u * v;
                    }
                }
                let va = saa - ma * ma;
                let vb = sbb - mb * mb;
                let cov = sab - ma * mb;
                acc += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            }
        }
        total += acc / (oh * ow) as f64;
    }
    Ok(total / c as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    /// Per-channel standard deviation of `noisy − clean`.
    pub std: [f64; 3],
    /// Lag-1 autocorrelation along rows, averaged over channels.
    pub autocorr_h: f64,
    /// Lag-1 autocorrelation along columns, averaged over channels.
    pub autocorr_v: f64,
    /// Channel covariance of the residual.
    pub covariance: [[f64; 3]; 3],
}

pub fn residual_stats<T: Real>(noisy: &Tensor<T>, clean: &Tensor<T>) -> Result<ResidualStats> {
    check_same(noisy, clean)?;
    let (c, h, w) = noisy.dims();
    if c != 3 || h * w == 0 {
        return Err(shape_err("residual statistics need non-empty 3-channel images"));
    }
    let n = (h * w) as f64;
    let res: Vec<Vec<f64>> = (0..3)
        .map(|ch| {
            noisy
                .plane(ch)
                .iter()
                .zip(clean.plane(ch))
                .map(|(a, b)| a.as_f64() - b.as_f64())
                .collect()
        })
        .collect();
    let means: Vec<f64> = res.iter().map(|r| r.iter().sum::<f64>() / n).collect();
    let mut covariance = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            covariance[i][j] = res[i]
                .iter()
                .zip(&res[j])
                .map(|(a, b)| (a - means[i]) * (b - means[j]))
                .sum::<f64>()
                / n;
        }
    }
    let std = [0, 1, 2].map(|i| covariance[i][i].sqrt());
    let lag = |dy: usize, dx: usize| -> f64 {
        let mut total = 0.0;
        for ch in 0..3 {
            let r = &res[ch];
            let m = means[ch];
            let var: f64 = r.iter().map(|v| (v - m) * (v - m)).sum();
            if var == 0.0 {
                continue;
            }
            let mut num = 0.0;
            for y in 0..h - dy {
                for x in 0..w - dx {
                    num += (r[y * w + x] - m) * (r[(y + dy) * w + x + dx] - m);
                }
            }
            total += num / var;
        }
        total / 3.0
    };
    Ok(ResidualStats {
        std,
        autocorr_h: if w > 1 { lag(0, 1) } else { 0.0 },
        autocorr_v: if h > 1 { lag(1, 0) } else { 0.0 },
        covariance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Side of the square residual patches.
    pub patch: usize,
    /// Upper bound on patches drawn per dataset.
    pub max_patches: usize,
    pub seed: u64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            patch: 8,
            max_patches: 1000,
            seed: 0,
        }
    }
}

/// Non-overlapping `patch×patch×3` residual patches, flattened, subsampled
/// without replacement to at most `max_patches`.
pub fn residual_patches<T: Real>(ds: &PairedDataset<T>, cfg: &ReportConfig) -> Result<Vec<Vec<f64>>> {
    if cfg.patch == 0 {
        return Err(Error::InvalidArgument("patch must be >= 1".into()));
    }
    let p = cfg.patch;
    let mut all = Vec::new();
    for (clean, noisy) in ds.pairs() {
        let (c, h, w) = clean.dims();
        for y0 in (0..h / p).map(|i| i * p) {
            for x0 in (0..w / p).map(|i| i * p) {
                let mut v = Vec::with_capacity(c * p * p);
                for ch in 0..c {
                    for y in y0..y0 + p {
                        for x in x0..x0 + p {
                            v.push(noisy.get(ch, y, x).as_f64() - clean.get(ch, y, x).as_f64());
                        }
                    }
                }
                all.push(v);
            }
        }
    }
    if all.len() <= cfg.max_patches {
        return Ok(all);
    }
    let mut r = rng::keyed(&[stream::EVAL, cfg.seed]);
    let mut picked = index::sample(&mut r, all.len(), cfg.max_patches).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| std::mem::take(&mut all[i])).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub mmd_generated: f64,
    pub mmd_baseline: f64,
    pub ratio: f64,
    pub bandwidth: f64,
    /// Real patches.
    pub m: usize,
    /// Generated patches.
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
}

/// MMD of real vs generated and real vs baseline residual patches, with one
/// bandwidth shared by both comparisons (median heuristic over all three
/// patch sets pooled).
pub fn domain_report<T: Real>(
    generated: &PairedDataset<T>,
    real: &PairedDataset<T>,
    baseline: &PairedDataset<T>,
    cfg: &ReportConfig,
) -> Result<DomainReport> {
    if generated.is_empty() || real.is_empty() || baseline.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let pr = residual_patches(real, cfg)?;
    let pg = residual_patches(generated, cfg)?;
    let pb = residual_patches(baseline, cfg)?;
    let h = median_bandwidth(&[&pr, &pg, &pb]);
    let gen = mmd_squared(&pr, &pg, Some(h))?;
    let base = mmd_squared(&pr, &pb, Some(h))?;
    Ok(DomainReport {
        mmd_generated: gen.value,
        mmd_baseline: base.value,
        ratio: gen.value / base.value,
        bandwidth: h,
        m: pr.len(),
        n: pg.len(),
        psnr: None,
        ssim: None,
    })
}

/// Mean PSNR and SSIM of `restore(noisy)` against `clean` over a dataset.
pub fn quality<T: Real>(
    ds: &PairedDataset<T>,
    mut restore: impl FnMut(&Tensor<T>) -> Result<Tensor<T>>,
) -> Result<(f64, f64)> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut p, mut s) = (0.0, 0.0);
    for (clean, noisy) in ds.pairs() {
        let out = restore(noisy)?;
        p += psnr(&out, clean)?;
        s += ssim(&out, clean)?;
    }
    Ok((p / ds.len() as f64, s / ds.len() as f64))
}
