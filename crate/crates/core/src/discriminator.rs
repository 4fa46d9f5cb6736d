//! Pixel-level discriminator and the relativistic pairing of its scores.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::{leaky_relu, leaky_relu_backward, Conv2d, Module, Param};
use crate::nn::sigmoid;
use crate::nn_util::{extend_prefixed, extend_prefixed_mut};
use crate::real::Real;
use crate::rng::{self, stream};
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorKind {
    /// Stride-1 layers; one score per input pixel.
    #[default]
    Pixel,
    /// Stride-2 layers followed by a global average; one score per image.
    Image,
}

/// How the opposing batch is averaged inside the relativistic pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BatchMean {
    /// Mean over the batch at each pixel position.
    #[default]
    PerPixel,
    /// One scalar mean over every pixel of every image.
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub width: usize,
    pub kind: DiscriminatorKind,
    pub batch_mean: BatchMean,
    pub seed: u64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            width: 64,
            kind: DiscriminatorKind::Pixel,
            batch_mean: BatchMean::PerPixel,
            seed: 1,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::Config("discriminator width must be >= 1".into()));
        }
        Ok(())
    }
}

/// Non-transformed discriminator output `C_D`, one channel.
pub type ScoreMap<T> = Tensor<T>;

/// Four 3×3 convolutions (3→w→w→w→1) with LeakyReLU(0.2) after the first three.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T> {
    config: DiscriminatorConfig,
    layers: Vec<Conv2d<T>>,
}

pub struct DiscriminatorCache<T> {
    /// Input to each conv layer.
    inputs: Vec<Tensor<T>>,
    /// Pre-activation output of each of the first three layers.
    pre: Vec<Tensor<T>>,
    /// Spatial dims of the last conv output (before global pooling).
    last_dims: (usize, usize, usize),
}

impl<T: Real> Discriminator<T> {
    pub fn new(config: DiscriminatorConfig) -> Result<Self> {
        config.validate()?;
        let mut r = rng::keyed(&[stream::INIT, config.seed, 0xD15C]);
        let w = config.width;
        let stride = match config.kind {
            DiscriminatorKind::Pixel => 1,
            DiscriminatorKind::Image => 2,
        };
        let widths = [3, w, w, w, 1];
        let layers = widths
            .windows(2)
            .map(|p| Conv2d::uniform(p[0], p[1], 3, stride, &mut r))
            .collect();
        Ok(Self { config, layers })
    }

    /// All kernels and biases zero.
    pub fn zeroed(config: DiscriminatorConfig) -> Result<Self> {
        let mut d = Self::new(config)?;
        for (_, p) in d.named_params_mut() {
            p.value.iter_mut().for_each(|v| *v = T::zero());
        }
        Ok(d)
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Conv2d<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Conv2d<T>] {
        &mut self.layers
    }

    pub fn forward_cached(&self, image: &Tensor<T>) -> Result<(ScoreMap<T>, DiscriminatorCache<T>)> {
        if image.channels() != 3 {
            return Err(shape_err(format!(
                "discriminator expects 3 channels, got {}",
                image.channels()
            )));
        }
        let slope = T::of(LEAKY_SLOPE);
        let mut inputs = Vec::with_capacity(4);
        let mut pre = Vec::with_capacity(3);
        let mut h = image.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h)?;
            inputs.push(h);
            if i + 1 < self.layers.len() {
                h = leaky_relu(&z, slope);
                pre.push(z);
            } else {
                h = z;
            }
        }
        let last_dims = h.dims();
        if self.config.kind == DiscriminatorKind::Image {
            h = Tensor::filled(1, 1, 1, h.mean());
        }
        Ok((
            h,
            DiscriminatorCache {
                inputs,
                pre,
                last_dims,
            },
        ))
    }

    /// `C_D(image)`.
    pub fn forward(&self, image: &Tensor<T>) -> Result<ScoreMap<T>> {
        Ok(self.forward_cached(image)?.0)
    }

    fn backward_impl(
        &mut self,
        cache: &DiscriminatorCache<T>,
        dscore: &ScoreMap<T>,
        param_grads: bool,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let slope = T::of(LEAKY_SLOPE);
        let mut g = match self.config.kind {
            DiscriminatorKind::Pixel => dscore.clone(),
            DiscriminatorKind::Image => {
                let (c, h, w) = cache.last_dims;
                let v = dscore.data()[0] / T::of((c * h * w) as f64);
                Tensor::filled(c, h, w, v)
            }
        };
        let n = self.layers.len();
        for i in (0..n).rev() {
            if i + 1 < n {
                g = leaky_relu_backward(&cache.pre[i], &g, slope);
            }
            let want_dx = i > 0 || need_dx;
            let layer = &mut self.layers[i];
            let dx = if param_grads {
                layer.backward(&cache.inputs[i], &g, want_dx)
            } else if want_dx {
                Some(layer.backward_input(&cache.inputs[i], &g))
            } else {
                None
            };
            {
                let d = dx?;
                g = d
            }
        }
        Some(g)
    }

    /// Accumulates parameter gradients only.
    pub fn backward_params(&mut self, cache: &DiscriminatorCache<T>, dscore: &ScoreMap<T>) {
        self.backward_impl(cache, dscore, true, false);
    }

    /// Gradient with respect to the input image; parameters untouched.
    pub fn backward_input(&mut self, cache: &DiscriminatorCache<T>, dscore: &ScoreMap<T>) -> Tensor<T> {
        self.backward_impl(cache, dscore, false, true)
            .expect("input gradient")
    }

    /// Both parameter gradients and the input gradient.
    pub fn backward(&mut self, cache: &DiscriminatorCache<T>, dscore: &ScoreMap<T>) -> Tensor<T> {
        self.backward_impl(cache, dscore, true, true)
            .expect("input gradient")
    }
}

impl<T: Real> Module<T> for Discriminator<T> {
    fn named_params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            extend_prefixed(&mut out, &format!("conv{i}"), l);
        }
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            extend_prefixed_mut(&mut out, &format!("conv{i}"), l);
        }
        out
    }
}

fn batch_means<T: Real>(maps: &[ScoreMap<T>], mode: BatchMean) -> Vec<T> {
    let n = maps[0].data().len();
    let b = T::of(maps.len() as f64);
    let mut mean = vec![T::zero(); n];
    for m in maps {
        for (acc, &v) in mean.iter_mut().zip(m.data()) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= b);
    if mode == BatchMean::Scalar {
        let s = mean.iter().copied().sum::<T>() / T::of(n as f64);
        mean.iter_mut().for_each(|v| *v = s);
    }
    mean
}

fn check_batches<T: Real>(real: &[ScoreMap<T>], fake: &[ScoreMap<T>]) -> Result<()> {
    let first = real
        .first()
        .or(fake.first())
        .ok_or_else(|| shape_err("empty score batches"))?;
    if real.is_empty() || fake.is_empty() {
        return Err(shape_err("relativistic pairing needs non-empty real and fake batches"));
    }
    if real.iter().chain(fake).any(|m| m.dims() != first.dims()) {
        return Err(shape_err("score maps differ in shape"));
    }
    Ok(())
}

/// Relativistic probabilities:
/// `d_real = σ(C_D(real) − E_fake[C_D(fake)])`,
/// `d_fake = σ(C_D(fake) − E_real[C_D(real)])`.
pub fn relativistic_scores<T: Real>(
    cd_real: &[ScoreMap<T>],
    cd_fake: &[ScoreMap<T>],
    mode: BatchMean,
) -> Result<(Vec<Tensor<T>>, Vec<Tensor<T>>)> {
    check_batches(cd_real, cd_fake)?;
    let mean_fake = batch_means(cd_fake, mode);
    let mean_real = batch_means(cd_real, mode);
    let pair = |maps: &[ScoreMap<T>], other: &[T]| -> Vec<Tensor<T>> {
        maps.iter()
            .map(|m| {
                let mut out = m.clone();
                for (v, &o) in out.data_mut().iter_mut().zip(other) {
                    *v = sigmoid(*v - o);
                }
                out
            })
            .collect()
    };
    Ok((pair(cd_real, &mean_fake), pair(cd_fake, &mean_real)))
}

/// Chain rule through [`relativistic_scores`]: maps upstream gradients on the
/// two probability batches to gradients on the raw score batches.
pub fn relativistic_backward<T: Real>(
    d_real: &[Tensor<T>],
    d_fake: &[Tensor<T>],
    g_real: &[Tensor<T>],
    g_fake: &[Tensor<T>],
    mode: BatchMean,
) -> (Vec<Tensor<T>>, Vec<Tensor<T>>) {
    let through_sigmoid = |d: &[Tensor<T>], g: &[Tensor<T>]| -> Vec<Tensor<T>> {
        d.iter()
            .zip(g)
            .map(|(p, gg)| {
                let mut s = gg.clone();
                for (v, &pv) in s.data_mut().iter_mut().zip(p.data()) {
                    *v *= pv * (T::one() - pv);
                }
                s
            })
            .collect()
    };
    let s_real = through_sigmoid(d_real, g_real);
    let s_fake = through_sigmoid(d_fake, g_fake);
    // Each raw score also enters the opposing batch's mean with weight 1/B.
    let mean_s_real = batch_means(&s_real, mode);
    let mean_s_fake = batch_means(&s_fake, mode);
    let finish = |s: Vec<Tensor<T>>, other: &[T]| -> Vec<Tensor<T>> {
        s.into_iter()
            .map(|mut t| {
                for (v, &o) in t.data_mut().iter_mut().zip(other) {
                    *v -= o;
                }
                t
            })
            .collect()
    };
    (finish(s_real, &mean_s_fake), finish(s_fake, &mean_s_real))
}
