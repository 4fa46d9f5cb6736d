//! Fast channel attention: a per-channel multiplicative gate
//! `1 + sigmoid(conv1d(GAP(x)))` computed from spatially pooled features,
//! with the 1-D convolution sliding over the channel axis (zero padded).

use super::param::{Module, Param};
use crate::error::{shape_err, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Fca<T> {
    /// `[k]`, odd length.
    pub kernel: Param<T>,
    /// `[1]`
    pub bias: Param<T>,
}

/// Values saved by [`Fca::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct FcaCache<T> {
    pub pooled: Vec<T>,
    /// `sigmoid(z)` per channel; the gate is `1 + sig`.
    pub sig: Vec<T>,
}

impl<T: Copy> FcaCache<T> {
    pub fn gate(&self) -> Vec<T>
    where
        T: Real,
    {
        self.sig.iter().map(|&s| T::one() + s).collect()
    }
}

#[inline]
pub fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

impl<T: Real> Fca<T> {
    /// Zero kernel and bias: every gate starts at exactly 1.5.
    pub fn zeros(kernel_size: usize) -> Self {
        assert!(kernel_size % 2 == 1, "FCA kernel size must be odd");
        Self {
            kernel: Param::zeros(vec![kernel_size]),
            bias: Param::zeros(vec![1]),
        }
    }

    pub fn with_values(kernel: Vec<T>, bias: T) -> Result<Self> {
        if kernel.len().is_multiple_of(2) {
            return Err(shape_err("FCA kernel size must be odd"));
        }
        Ok(Self {
            kernel: Param::new(vec![kernel.len()], kernel)?,
            bias: Param::new(vec![1], vec![bias])?,
        })
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.len()
    }

    /// Gate pre-activations `z` for pooled channel means.
    fn conv1d(&self, pooled: &[T]) -> Vec<T> {
        let k = self.kernel.len();
        let pad = (k / 2) as isize;
        let c = pooled.len() as isize;
        (0..c)
            .map(|ch| {
                let mut z = self.bias.value[0];
                for (j, &w) in self.kernel.value.iter().enumerate() {
                    let src = ch + j as isize - pad;
                    if (0..c).contains(&src) {
                        z += w * pooled[src as usize];
                    }
                }
                z
            })
            .collect()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, FcaCache<T>)> {
        if self.kernel.len() > x.channels() {
            return Err(shape_err(format!(
                "FCA kernel of length {} exceeds {} channels",
                self.kernel.len(),
                x.channels()
            )));
        }
        let hw = T::of(x.plane_len() as f64);
        let pooled: Vec<T> = (0..x.channels())
            .map(|c| x.plane(c).iter().copied().sum::<T>() / hw)
            .collect();
        let sig: Vec<T> = self.conv1d(&pooled).into_iter().map(sigmoid).collect();
        let mut y = x.clone();
        for (c, &s) in sig.iter().enumerate() {
            let g = T::one() + s;
            y.plane_mut(c).iter_mut().for_each(|v| *v *= g);
        }
        Ok((y, FcaCache { pooled, sig }))
    }

    /// Accumulates kernel/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor<T>, cache: &FcaCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let c = x.channels();
        let k = self.kernel.len();
        let pad = (k / 2) as isize;
        let hw = T::of(x.plane_len() as f64);
        let dz: Vec<T> = (0..c)
            .map(|ch| {
                let dgate: T = x
                    .plane(ch)
                    .iter()
                    .zip(dy.plane(ch))
                    .map(|(&a, &b)| a * b)
                    .sum();
                let s = cache.sig[ch];
                dgate * s * (T::one() - s)
            })
            .collect();
        let mut dpooled = vec![T::zero(); c];
        for (ch, &g) in dz.iter().enumerate() {
            self.bias.grad[0] += g;
            for j in 0..k {
                let src = ch as isize + j as isize - pad;
                if (0..c as isize).contains(&src) {
                    self.kernel.grad[j] += g * cache.pooled[src as usize];
                    dpooled[src as usize] += g * self.kernel.value[j];
                }
            }
        }
        let mut dx = dy.clone();
        for ch in 0..c {
            let gate = T::one() + cache.sig[ch];
            let from_pool = dpooled[ch] / hw;
            dx.plane_mut(ch)
                .iter_mut()
                .for_each(|v| *v = *v * gate + from_pool);
        }
        dx
    }
}

impl<T: Real> Module<T> for Fca<T> {
    fn named_params(&self) -> Vec<(String, &Param<T>)> {
        vec![("kernel".into(), &self.kernel), ("bias".into(), &self.bias)]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![
            ("kernel".into(), &mut self.kernel),
            ("bias".into(), &mut self.bias),
        ]
    }
}
