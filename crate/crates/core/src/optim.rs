//! Adam and the cosine-annealed learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::Module;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub lr_init: f64,
    pub lr_final: f64,
    pub total_steps: u64,
}

impl CosineSchedule {
    /// `lr_final + ½(lr_init − lr_final)(1 + cos(π·step/total))`
    pub fn lr_at(&self, step: u64) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::InvalidArgument(format!(
                "step {step} outside schedule of {} steps",
                self.total_steps
            )));
        }
        if self.total_steps == 0 {
            return Ok(self.lr_init);
        }
        let progress = step as f64 / self.total_steps as f64;
        Ok(self.lr_final
            + 0.5 * (self.lr_init - self.lr_final) * (1.0 + (std::f64::consts::PI * progress).cos()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    names: Vec<String>,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new<M: Module<T> + ?Sized>(module: &M, beta1: f64, beta2: f64) -> Self {
        let params = module.named_params();
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            names: params.iter().map(|(n, _)| n.clone()).collect(),
            m: params.iter().map(|(_, p)| vec![T::zero(); p.len()]).collect(),
            v: params.iter().map(|(_, p)| vec![T::zero(); p.len()]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update from the accumulated gradients.
    pub fn step<M: Module<T> + ?Sized>(&mut self, module: &mut M, lr: f64, module_name: &str) -> Result<()> {
        if module.is_frozen() {
            return Err(Error::Frozen(module_name.to_string()));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let one = T::one();
        let c1 = T::of(1.0 - self.beta1.powi(t));
        let c2 = T::of(1.0 - self.beta2.powi(t));
        let lr = T::of(lr);
        let eps = T::of(self.eps);
        let params = module.named_params_mut();
        if params.len() != self.names.len() {
            return Err(Error::InvalidArgument("optimizer/module parameter mismatch".into()));
        }
        for (i, (_, p)) in params.into_iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.value.len() {
                let g = p.grad[j];
                m[j] = b1 * m[j] + (one - b1) * g;
                v[j] = b2 * v[j] + (one - b2) * g * g;
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                p.value[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn store(&self, ck: &mut Checkpoint, namespace: &str) {
        ck.set_meta(format!("{namespace}.step"), self.step.to_string());
        ck.set_meta(format!("{namespace}.beta1"), self.beta1.to_string());
        ck.set_meta(format!("{namespace}.beta2"), self.beta2.to_string());
        for (i, name) in self.names.iter().enumerate() {
            ck.insert(format!("{namespace}/m/{name}"), vec![self.m[i].len()], &self.m[i]);
            ck.insert(format!("{namespace}/v/{name}"), vec![self.v[i].len()], &self.v[i]);
        }
    }

    pub fn load(&mut self, ck: &Checkpoint, namespace: &str) -> Result<()> {
        self.step = ck
            .meta(&format!("{namespace}.step"))?
            .parse()
            .map_err(|e| Error::Checkpoint(format!("bad optimizer step: {e}")))?;
        let parse = |key: String| -> Result<f64> {
            ck.meta(&key)?
                .parse()
                .map_err(|e| Error::Checkpoint(format!("bad `{key}`: {e}")))
        };
        self.beta1 = parse(format!("{namespace}.beta1"))?;
        self.beta2 = parse(format!("{namespace}.beta2"))?;
        for (i, name) in self.names.iter().enumerate() {
            let (_, m) = ck.get::<T>(&format!("{namespace}/m/{name}"))?;
            let (_, v) = ck.get::<T>(&format!("{namespace}/v/{name}"))?;
            if m.len() != self.m[i].len() || v.len() != self.v[i].len() {
                return Err(Error::Checkpoint(format!("optimizer state size for `{name}`")));
            }
            self.m[i] = m;
            self.v[i] = v;
        }
        Ok(())
    }
}
