//! Synthetic noise: the generator's stochastic inputs (AWGN and the
//! heteroscedastic Gaussian approximation of Poisson-Gaussian noise) and a
//! toy camera simulator that stands in for real sensor noise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::{self, stream};
use crate::tensor::Tensor;

/// Additive white Gaussian noise; `sigma_n` is on the 0–255 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AwgnConfig {
    pub sigma_n: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Signal-dependent Gaussian noise with variance `a·x + b²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonGaussConfig {
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Toy camera: tone curve, heteroscedastic noise, spatially blurred and
/// chromatically mixed noise field, inverse tone curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyCameraConfig {
    pub a: f64,
    pub b: f64,
    pub correlation_radius: usize,
    /// Row `c` gives the weights of the source noise channels feeding channel `c`.
    pub channel_mix: [[f64; 3]; 3],
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ToyCameraConfig {
    fn default() -> Self {
        Self {
            a: 0.01,
            b: 0.02,
            correlation_radius: 1,
            channel_mix: [[0.7, 0.2, 0.1], [0.15, 0.7, 0.15], [0.1, 0.2, 0.7]],
            gamma: 2.2,
            seed: 0,
        }
    }
}

impl AwgnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_n >= 0.0) || !self.sigma_n.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sigma_n must be finite and >= 0, got {}",
                self.sigma_n
            )));
        }
        Ok(())
    }

    /// Standard deviation in `[0, 1]` units.
    pub fn std(&self) -> f64 {
        self.sigma_n / 255.0
    }
}

impl PoissonGaussConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0) || !(self.b >= 0.0) || !self.a.is_finite() || !self.b.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise coefficients must be finite and >= 0, got a={} b={}",
                self.a, self.b
            )));
        }
        Ok(())
    }
}

impl ToyCameraConfig {
    pub fn validate(&self) -> Result<()> {
        PoissonGaussConfig {
            a: self.a,
            b: self.b,
            seed: 0,
        }
        .validate()?;
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        for (i, row) in self.channel_mix.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 || row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "channel_mix row {i} sums to {s}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// Standard-normal field drawn in storage order.
fn normal_field(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn heteroscedastic_noise<T: Real>(signal: &Tensor<T>, a: f64, b: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let z = normal_field(signal.data().len(), rng);
    signal
        .data()
        .iter()
        .zip(z)
        .map(|(&x, z)| (a * x.as_f64() + b * b).max(0.0).sqrt() * z)
        .collect()
}

fn add_clipped<T: Real>(clean: &Tensor<T>, noise: &[f64]) -> Tensor<T> {
    let mut out = clean.clone();
    for (v, n) in out.data_mut().iter_mut().zip(noise) {
        *v = T::of((v.as_f64() + n).clamp(0.0, 1.0));
    }
    out
}

pub(crate) fn poisson_gauss_with<T: Real>(
    clean: &Tensor<T>,
    a: f64,
    b: f64,
    rng: &mut ChaCha8Rng,
) -> Tensor<T> {
    let noise = heteroscedastic_noise(clean, a, b, rng);
    add_clipped(clean, &noise)
}

/// `clip(clean + ε)`, `ε ~ N(0, (σ_n/255)²)` i.i.d. per pixel and channel.
pub fn add_awgn<T: Real>(clean: &Tensor<T>, cfg: &AwgnConfig) -> Result<Tensor<T>> {
    cfg.validate()?;
    let mut r = rng::keyed(&[stream::NOISE, cfg.seed]);
    Ok(poisson_gauss_with(clean, 0.0, cfg.std(), &mut r))
}

/// `clip(clean + ε)`, `ε ~ N(0, a·clean + b²)` per pixel and channel.
pub fn add_poisson_gauss<T: Real>(clean: &Tensor<T>, cfg: &PoissonGaussConfig) -> Result<Tensor<T>> {
    cfg.validate()?;
    let mut r = rng::keyed(&[stream::NOISE, cfg.seed]);
    Ok(poisson_gauss_with(clean, cfg.a, cfg.b, &mut r))
}

/// Normalized box filter of radius `r` per channel, reflect padded.
fn box_blur(field: &[f64], c: usize, h: usize, w: usize, r: usize) -> Vec<f64> {
    if r == 0 {
        return field.to_vec();
    }
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        // Repeated folding handles radii larger than the image.
        loop {
            if i < 0 {
                i = -i;
            } else if i >= n {
                i = 2 * n - 2 - i;
            } else {
                return i as usize;
            }
            if n == 1 {
                return 0;
            }
        }
    };
    let norm = ((2 * r + 1) * (2 * r + 1)) as f64;
    let ri = r as isize;
    let mut out = vec![0.0; field.len()];
    for ch in 0..c {
        let plane = &field[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -ri..=ri {
                    let yy = reflect(y as isize + dy, h);
                    for dx in -ri..=ri {
                        acc += plane[yy * w + reflect(x as isize + dx, w)];
                    }
                }
                out[(ch * h + y) * w + x] = acc / norm;
            }
        }
    }
    out
}

pub fn simulate_with<T: Real>(
    clean: &Tensor<T>,
    cfg: &ToyCameraConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<T>> {
    cfg.validate()?;
    let (c, h, w) = clean.dims();
    if c != 3 {
        return Err(Error::Shape(format!("camera simulator needs 3 channels, got {c}")));
    }
    let unit_gamma = cfg.gamma == 1.0;
    let encoded = if unit_gamma {
        clean.clone()
    } else {
        let inv = 1.0 / cfg.gamma;
        clean.map(|v| T::of(v.as_f64().max(0.0).powf(inv)))
    };
    let noise = heteroscedastic_noise(&encoded, cfg.a, cfg.b, rng);
    let noise = box_blur(&noise, c, h, w, cfg.correlation_radius);
    let plane = h * w;
    let mut mixed = vec![0.0; noise.len()];
    for (ch, row) in cfg.channel_mix.iter().enumerate() {
        for i in 0..plane {
            mixed[ch * plane + i] =
                row[0] * noise[i] + row[1] * noise[plane + i] + row[2] * noise[2 * plane + i];
        }
    }
    let mut out = add_clipped(&encoded, &mixed);
    if !unit_gamma {
        out = out.map(|v| T::of(v.as_f64().powf(cfg.gamma)));
    }
    Ok(out)
}

/// Toy stand-in for real camera noise.
pub fn simulate_real_noise<T: Real>(clean: &Tensor<T>, cfg: &ToyCameraConfig) -> Result<Tensor<T>> {
    let mut r = rng::keyed(&[stream::NOISE, cfg.seed]);
    simulate_with(clean, cfg, &mut r)
}

/// The generator's stochastic input model ("synthetic setting").
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SynthNoise {
    Awgn { sigma_n: f64 },
    PoissonGauss { a: f64, b: f64 },
}

impl Default for SynthNoise {
    fn default() -> Self {
        SynthNoise::Awgn { sigma_n: 50.0 }
    }
}

impl SynthNoise {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SynthNoise::Awgn { sigma_n } => AwgnConfig { sigma_n, seed: 0 }.validate(),
            SynthNoise::PoissonGauss { a, b } => PoissonGaussConfig { a, b, seed: 0 }.validate(),
        }
    }

    /// Draws `I_syn` for `clean` from the stream keyed by `key`.
    pub fn apply<T: Real>(&self, clean: &Tensor<T>, key: &[u64]) -> Tensor<T> {
        let mut parts = vec![stream::NOISE];
        parts.extend_from_slice(key);
        let mut r = rng::keyed(&parts);
        match *self {
            SynthNoise::Awgn { sigma_n } => poisson_gauss_with(clean, 0.0, sigma_n / 255.0, &mut r),
            SynthNoise::PoissonGauss { a, b } => poisson_gauss_with(clean, a, b, &mut r),
        }
    }
}
