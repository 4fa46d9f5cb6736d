//! Training objectives and their gradients.
//!
//! Batch reductions: the L1 and perceptual terms sum over every value of an
//! image and average over the batch; the adversarial terms average over
//! every pixel of every map.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::denoiser::Denoiser;
use crate::error::{shape_err, Error, Result};
use crate::nn::{relu, relu_backward, Conv2d, Param};
use crate::real::Real;
use crate::rng::{self, stream};
use crate::tensor::Tensor;

/// Probability clamp applied before every logarithm.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_p: f64,
    pub lambda_ra: f64,
    /// Align denoised images; compare raw images when off.
    pub use_dd: bool,
    /// Pixel-level discriminator; image-level when off.
    pub use_pixel_d: bool,
    pub use_lp: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_p: 6e-3,
            lambda_ra: 8e-4,
            use_dd: true,
            use_pixel_d: true,
            use_lp: true,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_p", self.lambda_p), ("lambda_ra", self.lambda_ra)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    fn effective_lambda_p(&self) -> f64 {
        if self.use_lp {
            self.lambda_p
        } else {
            0.0
        }
    }
}

/// Scalar loss components of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub l1: f64,
    pub lp: f64,
    pub ld: f64,
    pub lg: f64,
}

/// `L1 + λp·Lp + λRa·(LD + LG)`, with disabled terms contributing 0.
pub fn total_objective(parts: &LossParts, w: &LossWeights) -> f64 {
    parts.l1 + w.effective_lambda_p() * parts.lp + w.lambda_ra * (parts.ld + parts.lg)
}

/// The part of the total objective the generator step minimizes.
pub fn generator_objective(parts: &LossParts, w: &LossWeights) -> f64 {
    parts.l1 + w.effective_lambda_p() * parts.lp + w.lambda_ra * parts.lg
}

fn check_batches<T: Real>(a: &[Tensor<T>], b: &[Tensor<T>]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(shape_err(format!("batch sizes {} and {} differ or are empty", a.len(), b.len())));
    }
    for (x, y) in a.iter().zip(b) {
        x.ensure_same_dims(y, "loss inputs")?;
    }
    Ok(())
}

/// `mean_b Σ |a − b|` and its gradient with respect to `a` (0 where equal).
pub fn l1_and_grad<T: Real>(a: &[Tensor<T>], b: &[Tensor<T>]) -> Result<(f64, Vec<Tensor<T>>)> {
    check_batches(a, b)?;
    let inv = 1.0 / a.len() as f64;
    let mut total = 0.0;
    let grads = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let mut g = x.zeros_like();
            for ((gv, &xv), &yv) in g.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
                let d = xv - yv;
                total += d.abs().as_f64();
                *gv = if d > T::zero() {
                    T::of(inv)
                } else if d < T::zero() {
                    T::of(-inv)
                } else {
                    T::zero()
                };
            }
            g
        })
        .collect();
    Ok((total * inv, grads))
}

fn maybe_denoise<T: Real>(batch: &[Tensor<T>], dd: Option<&Denoiser<T>>) -> Result<Vec<Tensor<T>>> {
    match dd {
        Some(d) => batch.iter().map(|x| d.denoise(x)).collect(),
        None => Ok(batch.to_vec()),
    }
}

/// Image-domain alignment: per-image sum of absolute differences between
/// the denoised fake and real images, averaged over the batch. `dd = None`
/// compares the images directly.
pub fn l1_alignment<T: Real>(i_fn: &[Tensor<T>], i_rn: &[Tensor<T>], dd: Option<&Denoiser<T>>) -> Result<f64> {
    check_batches(i_fn, i_rn)?;
    let a = maybe_denoise(i_fn, dd)?;
    let b = maybe_denoise(i_rn, dd)?;
    Ok(l1_and_grad(&a, &b)?.0)
}

/// Frozen conv stack with a ReLU after every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStack<T> {
    layers: Vec<Conv2d<T>>,
}

pub struct ConvStackCache<T> {
    inputs: Vec<Tensor<T>>,
    pre: Vec<Tensor<T>>,
}

impl<T: Real> ConvStack<T> {
    pub fn new(layers: Vec<Conv2d<T>>) -> Result<Self> {
        for w in layers.windows(2) {
            if w[0].out_channels() != w[1].in_channels() {
                return Err(shape_err("feature layers do not chain"));
            }
        }
        if layers.first().is_some_and(|l| l.in_channels() != 3) {
            return Err(shape_err("first feature layer must take 3 channels"));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Conv2d<T>] {
        &self.layers
    }

    fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvStackCache<T>)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in &self.layers {
            let z = l.forward(&h)?;
            inputs.push(h);
            h = relu(&z);
            pre.push(z);
        }
        Ok((h, ConvStackCache { inputs, pre }))
    }

    fn backward_input(&self, cache: &ConvStackCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let mut g = dy.clone();
        for i in (0..self.layers.len()).rev() {
            g = relu_backward(&cache.pre[i], &g);
            g = self.layers[i].backward_input(&cache.inputs[i], &g);
        }
        g
    }
}

/// Frozen image-to-feature mapping used by the perceptual loss.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureExtractor<T> {
    /// Random 3→16→32→64 stride-2 conv stack from a fixed seed.
    FixedRandomConv(ConvStack<T>),
    /// Externally supplied weights, the post-ReLU output of the last layer.
    Imported(ConvStack<T>),
    /// Features are the image itself.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[default]
    FixedRandomConv,
    PretrainedImport,
    Identity,
}

pub enum FeatureCache<T> {
    Stack(ConvStackCache<T>),
    Identity,
}

impl<T: Real> FeatureExtractor<T> {
    pub fn fixed_random(seed: u64) -> Self {
        let mut r = rng::keyed(&[stream::FEATURES, seed]);
        let widths = [3, 16, 32, 64];
        let layers = widths
            .windows(2)
            .map(|w| Conv2d::uniform(w[0], w[1], 3, 2, &mut r))
            .collect();
        FeatureExtractor::FixedRandomConv(ConvStack { layers })
    }

    /// Reads `features/conv<i>.weight` / `.bias` for consecutive `i` and the
    /// per-layer strides from the `features.strides` metadata entry
    /// (comma-separated, default 1).
    pub fn import(ck: &Checkpoint) -> Result<Self> {
        let strides: Vec<usize> = match ck.meta.get("features.strides") {
            Some(s) => s
                .split(',')
                .map(|v| v.trim().parse().map_err(|_| Error::Checkpoint(format!("bad stride `{v}`"))))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        let mut layers = Vec::new();
        while ck.arrays.contains_key(&format!("features/conv{}.weight", layers.len())) {
            let i = layers.len();
            let (ws, wv) = ck.get::<T>(&format!("features/conv{i}.weight"))?;
            let (bs, bv) = ck.get::<T>(&format!("features/conv{i}.bias"))?;
            let stride = strides.get(i).copied().unwrap_or(1);
            layers.push(Conv2d::from_arrays(Param::new(ws, wv)?, Param::new(bs, bv)?, stride)?);
        }
        if layers.is_empty() {
            return Err(Error::Checkpoint("no `features/conv0.weight` array".into()));
        }
        Ok(FeatureExtractor::Imported(ConvStack::new(layers)?))
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureExtractor::FixedRandomConv(_) => FeatureKind::FixedRandomConv,
            FeatureExtractor::Imported(_) => FeatureKind::PretrainedImport,
            FeatureExtractor::Identity => FeatureKind::Identity,
        }
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, FeatureCache<T>)> {
        match self {
            FeatureExtractor::FixedRandomConv(s) | FeatureExtractor::Imported(s) => {
                let (y, c) = s.forward_cached(x)?;
                Ok((y, FeatureCache::Stack(c)))
            }
            FeatureExtractor::Identity => Ok((x.clone(), FeatureCache::Identity)),
        }
    }

    pub fn features(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn backward_input(&self, cache: &FeatureCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        match (self, cache) {
            (FeatureExtractor::FixedRandomConv(s) | FeatureExtractor::Imported(s), FeatureCache::Stack(c)) => {
                s.backward_input(c, dy)
            }
            _ => dy.clone(),
        }
    }
}

/// `mean_b Σ (fx(a) − fx(b))²` and its gradient with respect to `a`.
pub fn perceptual_and_grad<T: Real>(
    fx: &FeatureExtractor<T>,
    a: &[Tensor<T>],
    b: &[Tensor<T>],
) -> Result<(f64, Vec<Tensor<T>>)> {
    check_batches(a, b)?;
    let inv = 1.0 / a.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        let (fa, cache) = fx.forward_cached(x)?;
        let fb = fx.features(y)?;
        let mut g = fa.zeros_like();
        for ((gv, &u), &v) in g.data_mut().iter_mut().zip(fa.data()).zip(fb.data()) {
            let d = u - v;
            total += (d * d).as_f64();
            *gv = T::of(2.0 * inv) * d;
        }
        grads.push(fx.backward_input(&cache, &g));
    }
    Ok((total * inv, grads))
}

/// Squared feature distance between the denoised fake and real images,
/// averaged over the batch. `dd = None` skips the denoiser.
pub fn perceptual_loss<T: Real>(
    i_fn: &[Tensor<T>],
    i_rn: &[Tensor<T>],
    dd: Option<&Denoiser<T>>,
    fx: &FeatureExtractor<T>,
) -> Result<f64> {
    check_batches(i_fn, i_rn)?;
    let a = maybe_denoise(i_fn, dd)?;
    let b = maybe_denoise(i_rn, dd)?;
    Ok(perceptual_and_grad(fx, &a, &b)?.0)
}

fn mean_log<T: Real>(maps: &[Tensor<T>], complement: bool) -> (f64, usize) {
    let mut s = 0.0;
    let mut n = 0;
    for m in maps {
        for &p in m.data() {
            let p = p.as_f64();
            let q = if complement { 1.0 - p } else { p };
            s += q.clamp(PROB_EPS, 1.0 - PROB_EPS).ln();
            n += 1;
        }
    }
    (s / n as f64, n)
}

/// `(L_D, L_G)` from relativistic probability maps.
pub fn adversarial_losses<T: Real>(d_real: &[Tensor<T>], d_fake: &[Tensor<T>]) -> (f64, f64) {
    let (lr, _) = mean_log(d_real, false);
    let (lf1, _) = mean_log(d_fake, true);
    let (lr1, _) = mean_log(d_real, true);
    let (lf, _) = mean_log(d_fake, false);
    (-(lr + lf1), -(lr1 + lf))
}

/// Gradients of `L_D` or `L_G` with respect to the probability maps.
#[derive(Debug, Clone)]
pub struct AdversarialGrads<T> {
    pub real: Vec<Tensor<T>>,
    pub fake: Vec<Tensor<T>>,
}

fn log_grad<T: Real>(maps: &[Tensor<T>], complement: bool) -> Vec<Tensor<T>> {
    let n: usize = maps.iter().map(|m| m.data().len()).sum();
    let inv = 1.0 / n as f64;
    maps.iter()
        .map(|m| {
            m.map(|p| {
                let p = p.as_f64();
                let q = if complement { 1.0 - p } else { p };
                if !(PROB_EPS..=1.0 - PROB_EPS).contains(&q) {
                    return T::zero();
                }
                // d/dp of −ln(q)/n
                let dq = -inv / q;
                T::of(if complement { -dq } else { dq })
            })
        })
        .collect()
}

/// Gradients of `L_D` with respect to the real and fake probability maps.
pub fn discriminator_loss_grads<T: Real>(d_real: &[Tensor<T>], d_fake: &[Tensor<T>]) -> AdversarialGrads<T> {
    AdversarialGrads {
        real: log_grad(d_real, false),
        fake: log_grad(d_fake, true),
    }
}

/// Gradients of `L_G` with respect to the real and fake probability maps.
pub fn generator_loss_grads<T: Real>(d_real: &[Tensor<T>], d_fake: &[Tensor<T>]) -> AdversarialGrads<T> {
    AdversarialGrads {
        real: log_grad(d_real, true),
        fake: log_grad(d_fake, false),
    }
}
