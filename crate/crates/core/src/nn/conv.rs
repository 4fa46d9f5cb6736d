use rand::Rng;

use super::param::{Module, Param};
use crate::error::{shape_err, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// 2-D convolution with reflect padding of `kernel / 2` on every side.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `[out, in, k, k]`
    pub weight: Param<T>,
    /// `[out]`
    pub bias: Param<T>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
}

/// Mirror an out-of-range index back into `0..n` without repeating the edge.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * n - 2 - i;
    }
    debug_assert!((0..n).contains(&i), "padding wider than input");
    i as usize
}

impl<T: Real> Conv2d<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        assert!(kernel % 2 == 1, "odd kernels only");
        assert!(stride >= 1);
        Self {
            weight: Param::zeros(vec![out_channels, in_channels, kernel, kernel]),
            bias: Param::zeros(vec![out_channels]),
            in_channels,
            out_channels,
            kernel,
            stride,
        }
    }

    /// Builds a layer from a `[out, in, k, k]` weight and `[out]` bias.
    pub fn from_arrays(weight: Param<T>, bias: Param<T>, stride: usize) -> Result<Self> {
        let &[out_channels, in_channels, k, k2] = weight.shape.as_slice() else {
            return Err(shape_err(format!("conv weight must be 4-D, got {:?}", weight.shape)));
        };
        if k != k2 || k % 2 == 0 || stride == 0 || bias.shape != [out_channels] {
            return Err(shape_err(format!(
                "conv weight {:?} / bias {:?} / stride {stride} not usable",
                weight.shape, bias.shape
            )));
        }
        Ok(Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel: k,
            stride,
        })
    }

    /// He-uniform weights and zero bias, sized for a following ReLU.
    pub fn he_uniform<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let mut conv = Self::zeros(in_channels, out_channels, kernel, stride);
        let bound = (6.0 / (in_channels * kernel * kernel) as f64).sqrt();
        for w in conv.weight.value.iter_mut() {
            *w = T::of(rng.gen_range(-bound..bound));
        }
        conv
    }

    /// Fan-in scaled uniform init, `U(-1/√fan_in, 1/√fan_in)` for weights and bias.
    pub fn uniform<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let mut conv = Self::zeros(in_channels, out_channels, kernel, stride);
        let bound = 1.0 / ((in_channels * kernel * kernel) as f64).sqrt();
        for w in conv.weight.value.iter_mut() {
            *w = T::of(rng.gen_range(-bound..bound));
        }
        for b in conv.bias.value.iter_mut() {
            *b = T::of(rng.gen_range(-bound..bound));
        }
        conv
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn output_dims(&self, height: usize, width: usize) -> (usize, usize) {
        let p = self.pad();
        let k = self.kernel;
        (
            (height + 2 * p - k) / self.stride + 1,
            (width + 2 * p - k) / self.stride + 1,
        )
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(shape_err(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        let p = self.pad();
        if p > 0 && (x.height() <= p || x.width() <= p) && (x.height() > 1 && x.width() > 1) {
            return Err(shape_err(format!(
                "reflect padding {p} needs spatial dims > {p}, got {}x{}",
                x.height(),
                x.width()
            )));
        }
        Ok(())
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1
    }

    /// Patch matrix `[in·k·k, ho·wo]`.
    fn im2col(&self, x: &Tensor<T>, ho: usize, wo: usize) -> Vec<T> {
        let (cin, h, w) = x.dims();
        let k = self.kernel;
        let s = self.stride;
        let p = self.pad() as isize;
        let npos = ho * wo;
        let mut cols = vec![T::zero(); cin * k * k * npos];
        // Precompute reflected source indices per output row/column.
        let ys: Vec<Vec<usize>> = (0..k)
            .map(|ky| {
                (0..ho)
                    .map(|oy| reflect((oy * s) as isize + ky as isize - p, h))
                    .collect()
            })
            .collect();
        let xs: Vec<Vec<usize>> = (0..k)
            .map(|kx| {
                (0..wo)
                    .map(|ox| reflect((ox * s) as isize + kx as isize - p, w))
                    .collect()
            })
            .collect();
        for ci in 0..cin {
            let plane = x.plane(ci);
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut cols[row * npos..(row + 1) * npos];
                    for oy in 0..ho {
                        let src = &plane[ys[ky][oy] * w..(ys[ky][oy] + 1) * w];
                        let drow = &mut dst[oy * wo..(oy + 1) * wo];
                        for (d, &sx) in drow.iter_mut().zip(&xs[kx]) {
                            *d = src[sx];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &[T], dims: (usize, usize, usize), ho: usize, wo: usize) -> Tensor<T> {
        let (cin, h, w) = dims;
        let k = self.kernel;
        let s = self.stride;
        let p = self.pad() as isize;
        let npos = ho * wo;
        let mut dx = Tensor::zeros(cin, h, w);
        for ci in 0..cin {
            let plane = dx.plane_mut(ci);
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &dcols[row * npos..(row + 1) * npos];
                    for oy in 0..ho {
                        let iy = reflect((oy * s) as isize + ky as isize - p, h);
                        for ox in 0..wo {
                            let ix = reflect((ox * s) as isize + kx as isize - p, w);
                            plane[iy * w + ix] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let (ho, wo) = self.output_dims(x.height(), x.width());
        let npos = ho * wo;
        let kk = self.in_channels * self.kernel * self.kernel;
        let mut out = vec![T::zero(); self.out_channels * npos];
        for (co, chunk) in out.chunks_mut(npos).enumerate() {
            chunk.iter_mut().for_each(|v| *v = self.bias.value[co]);
        }
        if self.is_pointwise() {
            T::gemm(
                self.out_channels,
                kk,
                npos,
                &self.weight.value,
                false,
                x.data(),
                false,
                &mut out,
                true,
            );
        } else {
            let cols = self.im2col(x, ho, wo);
            T::gemm(
                self.out_channels,
                kk,
                npos,
                &self.weight.value,
                false,
                &cols,
                false,
                &mut out,
                true,
            );
        }
        Tensor::from_vec(self.out_channels, ho, wo, out)
    }

    fn backward_impl(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        param_grads: Option<(&mut [T], &mut [T])>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let (ho, wo) = (dy.height(), dy.width());
        debug_assert_eq!((ho, wo), self.output_dims(x.height(), x.width()));
        debug_assert_eq!(dy.channels(), self.out_channels);
        let npos = ho * wo;
        let kk = self.in_channels * self.kernel * self.kernel;
        let cols_owned;
        let cols: &[T] = if self.is_pointwise() {
            x.data()
        } else {
            cols_owned = self.im2col(x, ho, wo);
            &cols_owned
        };
        if let Some((wgrad, bgrad)) = param_grads {
            // dW += dY · colsᵀ
            T::gemm(
                self.out_channels,
                npos,
                kk,
                dy.data(),
                false,
                cols,
                true,
                wgrad,
                true,
            );
            for (co, g) in bgrad.iter_mut().enumerate() {
                *g += dy.plane(co).iter().copied().sum::<T>();
            }
        }
        if !need_dx {
            return None;
        }
        // dcols = Wᵀ · dY
        let mut dcols = vec![T::zero(); kk * npos];
        T::gemm(
            kk,
            self.out_channels,
            npos,
            &self.weight.value,
            true,
            dy.data(),
            false,
            &mut dcols,
            false,
        );
        if self.is_pointwise() {
            Some(Tensor::from_vec(self.in_channels, ho, wo, dcols).expect("pointwise dims"))
        } else {
            Some(self.col2im(&dcols, x.dims(), ho, wo))
        }
    }

    /// Accumulates parameter gradients; returns the input gradient when
    /// `need_dx` is set.
    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        let mut wgrad = std::mem::take(&mut self.weight.grad);
        let mut bgrad = std::mem::take(&mut self.bias.grad);
        let dx = self.backward_impl(x, dy, Some((&mut wgrad, &mut bgrad)), need_dx);
        self.weight.grad = wgrad;
        self.bias.grad = bgrad;
        dx
    }

    /// Input gradient only; parameters and their gradients are untouched.
    pub fn backward_input(&self, x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
        self.backward_impl(x, dy, None, true)
            .expect("input gradient requested")
    }
}

impl<T: Real> Module<T> for Conv2d<T> {
    fn named_params(&self) -> Vec<(String, &Param<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![
            ("weight".into(), &mut self.weight),
            ("bias".into(), &mut self.bias),
        ]
    }
}
