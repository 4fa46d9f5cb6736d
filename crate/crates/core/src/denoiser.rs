//! A small residual CNN denoiser: `denoise(x) = clip(x − net(x))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{sample_batch, PairedDataset};
use crate::nn::{relu, relu_backward, Conv2d, Module, Param};
use crate::nn_util::{extend_prefixed, extend_prefixed_mut};
use crate::optim::{Adam, CosineSchedule};
use crate::real::Real;
use crate::rng::{self, stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    /// Number of conv layers (`d`), at least 2.
    pub depth: usize,
    /// Hidden channels (`C_d`).
    pub width: usize,
    pub seed: u64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            depth: 8,
            width: 64,
            seed: 0,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 || self.width == 0 {
            return Err(Error::Config("denoiser needs depth >= 2 and width >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser<T> {
    config: DenoiserConfig,
    layers: Vec<Conv2d<T>>,
    frozen: bool,
}

pub struct DenoiserCache<T> {
    inputs: Vec<Tensor<T>>,
    pre: Vec<Tensor<T>>,
    /// `x − net(x)` before clipping.
    unclipped: Tensor<T>,
}

/// The clip passes gradient only where it did not saturate.
fn clip_backward<T: Real>(unclipped: &Tensor<T>, dout: &Tensor<T>) -> Tensor<T> {
    let mut g = dout.clone();
    for (v, &u) in g.data_mut().iter_mut().zip(unclipped.data()) {
        if u < T::zero() || u > T::one() {
            *v = T::zero();
        }
    }
    g
}

impl<T: Real> Denoiser<T> {
    /// He-uniform hidden layers and a zero last layer, so a fresh
    /// denoiser is the identity on [0,1] inputs.
    pub fn new(config: DenoiserConfig) -> Result<Self> {
        config.validate()?;
        let mut r = rng::keyed(&[stream::INIT, config.seed, 0xDE]);
        let w = config.width;
        let mut layers = Vec::with_capacity(config.depth);
        layers.push(Conv2d::he_uniform(3, w, 3, 1, &mut r));
        for _ in 0..config.depth - 2 {
            layers.push(Conv2d::he_uniform(w, w, 3, 1, &mut r));
        }
        layers.push(Conv2d::zeros(w, 3, 3, 1));
        Ok(Self {
            config,
            layers,
            frozen: false,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn layers_mut(&mut self) -> &mut [Conv2d<T>] {
        &mut self.layers
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    pub fn forward_cached(&self, noisy: &Tensor<T>) -> Result<(Tensor<T>, DenoiserCache<T>)> {
        if noisy.channels() != 3 {
            return Err(crate::error::shape_err(format!(
                "denoiser expects 3 channels, got {}",
                noisy.channels()
            )));
        }
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n - 1);
        let mut h = noisy.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h)?;
            inputs.push(h);
            if i + 1 < n {
                h = relu(&z);
                pre.push(z);
            } else {
                h = z;
            }
        }
        let unclipped = noisy.sub(&h);
        let out = unclipped.clip01();
        Ok((
            out,
            DenoiserCache {
                inputs,
                pre,
                unclipped,
            },
        ))
    }

    pub fn denoise(&self, noisy: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(noisy)?.0)
    }

    /// Input gradient only; parameters are not touched.
    pub fn backward_input(&self, cache: &DenoiserCache<T>, dout: &Tensor<T>) -> Tensor<T> {
        let dv = clip_backward(&cache.unclipped, dout);
        let mut g = dv.map(|v| -v);
        let n = self.layers.len();
        for i in (0..n).rev() {
            if i + 1 < n {
                g = relu_backward(&cache.pre[i], &g);
            }
            g = self.layers[i].backward_input(&cache.inputs[i], &g);
        }
        g.add_assign(&dv);
        g
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &DenoiserCache<T>, dout: &Tensor<T>) -> Result<Tensor<T>> {
        if self.frozen {
            return Err(Error::Frozen("denoiser".into()));
        }
        let dv = clip_backward(&cache.unclipped, dout);
        let mut g = dv.map(|v| -v);
        let n = self.layers.len();
        for i in (0..n).rev() {
            if i + 1 < n {
                g = relu_backward(&cache.pre[i], &g);
            }
            g = self.layers[i]
                .backward(&cache.inputs[i], &g, true)
                .expect("input gradient");
        }
        g.add_assign(&dv);
        Ok(g)
    }
}

impl<T: Real> Module<T> for Denoiser<T> {
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

    fn is_frozen(&self) -> bool {
        self.frozen
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserTrainConfig {
    pub steps: u64,
    pub batch: usize,
    pub patch: usize,
    pub lr_init: f64,
    pub lr_final: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub seed: u64,
}

impl Default for DenoiserTrainConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            batch: 8,
            patch: 64,
            lr_init: 1e-3,
            lr_final: 1e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            seed: 0,
        }
    }
}

impl DenoiserTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch must be >= 1".into()));
        }
        if !(self.lr_final <= self.lr_init) || self.lr_final < 0.0 {
            return Err(Error::Config("need 0 <= lr_final <= lr_init".into()));
        }
        for b in [self.adam_beta1, self.adam_beta2] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("adam beta {b} outside (0,1)")));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> CosineSchedule {
        CosineSchedule {
            lr_init: self.lr_init,
            lr_final: self.lr_final,
            total_steps: self.steps,
        }
    }
}

/// Mean absolute error between `denoise(noisy)` and `clean`, averaged over
/// every value in the batch, and its gradient per denoised output.
pub fn mae_and_grad<T: Real>(outputs: &[Tensor<T>], clean: &[Tensor<T>]) -> (f64, Vec<Tensor<T>>) {
    let count: usize = outputs.iter().map(|o| o.data().len()).sum();
    let inv = T::of(1.0 / count as f64);
    let mut loss = 0.0;
    let grads = outputs
        .iter()
        .zip(clean)
        .map(|(o, c)| {
            let mut g = o.zeros_like();
            for ((gv, &ov), &cv) in g.data_mut().iter_mut().zip(o.data()).zip(c.data()) {
                let d = ov - cv;
                loss += d.abs().as_f64();
                *gv = if d > T::zero() {
                    inv
                } else if d < T::zero() {
                    -inv
                } else {
                    T::zero()
                };
            }
            g
        })
        .collect();
    (loss / count as f64, grads)
}

/// Trains `model` in place on `dataset` and returns the per-step loss curve.
/// The model is frozen on return.
pub fn fit_denoiser<T: Real>(
    model: &mut Denoiser<T>,
    dataset: &PairedDataset<T>,
    cfg: &DenoiserTrainConfig,
    mut on_step: impl FnMut(u64, f64),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    model.unfreeze();
    let schedule = cfg.schedule();
    let mut adam = Adam::new(&*model, cfg.adam_beta1, cfg.adam_beta2);
    let mut curve = Vec::with_capacity(cfg.steps as usize);
    for step in 0..cfg.steps {
        let batch = sample_batch(dataset, cfg.batch, cfg.patch, cfg.seed, step)?;
        model.zero_grad();
        let mut outputs = Vec::with_capacity(batch.len());
        let mut caches = Vec::with_capacity(batch.len());
        for (_, noisy) in &batch {
            let (o, c) = model.forward_cached(noisy)?;
            outputs.push(o);
            caches.push(c);
        }
        let cleans: Vec<Tensor<T>> = batch.into_iter().map(|(c, _)| c).collect();
        let (loss, grads) = mae_and_grad(&outputs, &cleans);
        if !loss.is_finite() {
            return Err(Error::NonFinite { step, loss: "mae" });
        }
        for (c, g) in caches.iter().zip(&grads) {
            model.backward(c, g)?;
        }
        adam.step(model, schedule.lr_at(step)?, "denoiser")?;
        curve.push(loss);
        on_step(step, loss);
    }
    model.freeze();
    Ok(curve)
}

/// Fresh denoiser trained on `dataset`; returned frozen.
pub fn train_denoiser<T: Real>(
    dataset: &PairedDataset<T>,
    model_cfg: &DenoiserConfig,
    cfg: &DenoiserTrainConfig,
) -> Result<(Denoiser<T>, Vec<f64>)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = Denoiser::new(model_cfg.clone())?;
    let curve = fit_denoiser(&mut model, dataset, cfg, |_, _| {})?;
    Ok((model, curve))
}
