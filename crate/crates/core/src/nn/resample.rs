//! Fixed (non-learnable) resampling: anti-aliased blur-pool downsampling and
//! bilinear resizing.

use super::conv::reflect;
use crate::error::{shape_err, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Binomial `[1, 2, 1] / 4` taps; the 2-D filter is their outer product.
const BLUR_TAPS: [f64; 3] = [0.25, 0.5, 0.25];

fn blur_down2<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (c, h, w) = x.dims();
    let taps = BLUR_TAPS.map(T::of);
    Tensor::from_fn(c, h / 2, w / 2, |ch, oy, ox| {
        let mut acc = T::zero();
        for (ky, &fy) in taps.iter().enumerate() {
            let iy = reflect((2 * oy + ky) as isize - 1, h);
            for (kx, &fx) in taps.iter().enumerate() {
                let ix = reflect((2 * ox + kx) as isize - 1, w);
                acc += fy * fx * x.get(ch, iy, ix);
            }
        }
        acc
    })
}

fn blur_down2_adjoint<T: Real>(dy: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let c = dy.channels();
    let taps = BLUR_TAPS.map(T::of);
    let mut dx = Tensor::zeros(c, h, w);
    for ch in 0..c {
        for oy in 0..dy.height() {
            for ox in 0..dy.width() {
                let g = dy.get(ch, oy, ox);
                for (ky, &fy) in taps.iter().enumerate() {
                    let iy = reflect((2 * oy + ky) as isize - 1, h);
                    for (kx, &fx) in taps.iter().enumerate() {
                        let ix = reflect((2 * ox + kx) as isize - 1, w);
                        let cur = dx.get(ch, iy, ix);
                        dx.set(ch, iy, ix, cur + fy * fx * g);
                    }
                }
            }
        }
    }
    dx
}

fn check_factor(h: usize, w: usize, factor: usize) -> Result<()> {
    if factor != 2 && factor != 4 {
        return Err(shape_err(format!("blur-pool factor must be 2 or 4, got {factor}")));
    }
    if !h.is_multiple_of(factor) || !w.is_multiple_of(factor) || h == 0 || w == 0 {
        return Err(shape_err(format!(
            "blur-pool factor {factor} does not divide {h}x{w}"
        )));
    }
    Ok(())
}

/// Shift-invariant downsampling: each ×2 stage blurs with the normalized
/// binomial filter (reflect padding) and keeps every second sample.
/// Factor 4 runs two stages.
pub fn blur_pool_down<T: Real>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    check_factor(x.height(), x.width(), factor)?;
    let mut out = blur_down2(x);
    if factor == 4 {
        out = blur_down2(&out);
    }
    Ok(out)
}

/// Adjoint of [`blur_pool_down`] for an input of spatial size `h × w`.
pub fn blur_pool_down_backward<T: Real>(
    dy: &Tensor<T>,
    h: usize,
    w: usize,
    factor: usize,
) -> Result<Tensor<T>> {
    check_factor(h, w, factor)?;
    if dy.height() * factor != h || dy.width() * factor != w {
        return Err(shape_err("blur-pool gradient dims"));
    }
    if factor == 4 {
        let mid = blur_down2_adjoint(dy, h / 2, w / 2);
        Ok(blur_down2_adjoint(&mid, h, w))
    } else {
        Ok(blur_down2_adjoint(dy, h, w))
    }
}

/// Per-axis interpolation table: (lower index, upper index, lower weight,
/// upper weight) for each output coordinate.
///
/// Half-pixel ("align corners = false") convention:
/// `src = (dst + 0.5) · in / out − 0.5`, clamped below at 0; the upper
/// neighbour is clamped to the last input index.
fn axis_table(input: usize, output: usize) -> Vec<(usize, usize, f64, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = if i0 + 1 < input { i0 + 1 } else { i0 };
            let l1 = src - i0 as f64;
            (i0, i1, 1.0 - l1, l1)
        })
        .collect()
}

/// Bilinear resize to `out_h × out_w` (half-pixel centres, no antialiasing).
pub fn bilinear_resize<T: Real>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    let (c, h, w) = x.dims();
    let ty = axis_table(h, out_h);
    let tx = axis_table(w, out_w);
    Tensor::from_fn(c, out_h, out_w, |ch, oy, ox| {
        let (y0, y1, wy0, wy1) = ty[oy];
        let (x0, x1, wx0, wx1) = tx[ox];
        let (wy0, wy1, wx0, wx1) = (T::of(wy0), T::of(wy1), T::of(wx0), T::of(wx1));
        wy0 * (wx0 * x.get(ch, y0, x0) + wx1 * x.get(ch, y0, x1))
            + wy1 * (wx0 * x.get(ch, y1, x0) + wx1 * x.get(ch, y1, x1))
    })
}

/// Adjoint of [`bilinear_resize`] back onto an `h × w` input grid.
pub fn bilinear_resize_backward<T: Real>(dy: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let (c, out_h, out_w) = dy.dims();
    let ty = axis_table(h, out_h);
    let tx = axis_table(w, out_w);
    let mut dx = Tensor::zeros(c, h, w);
    for ch in 0..c {
        let plane = dx.plane_mut(ch);
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let g = dy.get(ch, oy, ox);
                plane[y0 * w + x0] += T::of(wy0) * T::of(wx0) * g;
                plane[y0 * w + x1] += T::of(wy0) * T::of(wx1) * g;
                plane[y1 * w + x0] += T::of(wy1) * T::of(wx0) * g;
                plane[y1 * w + x1] += T::of(wy1) * T::of(wx1) * g;
            }
        }
    }
    dx
}
