//! Procedural scenes and toy datasets for desk-scale experiments.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::imaging::{PairedDataset, SourceTag};
use crate::noise::{simulate_with, SynthNoise, ToyCameraConfig};
use crate::real::Real;
use crate::rng::{self, stream};
use crate::tensor::Tensor;

fn color(r: &mut ChaCha8Rng) -> [f64; 3] {
    [r.gen_range(0.1..0.9), r.gen_range(0.1..0.9), r.gen_range(0.1..0.9)]
}

/// A smooth gradient background with a few flat discs and rectangles and a
/// faint sinusoidal texture. Values stay inside `[0.05, 0.95]`.
pub fn toy_scene<T: Real>(height: usize, width: usize, seed: u64, index: u64) -> Tensor<T> {
    let mut r = rng::keyed(&[stream::TOY_SCENE, seed, index]);
    let (c0, c1) = (color(&mut r), color(&mut r));
    let angle: f64 = r.gen_range(0.0..std::f64::consts::TAU);
    let (ca, sa) = (angle.cos(), angle.sin());
    let freq: f64 = r.gen_range(0.2..0.9);
    let amp: f64 = r.gen_range(0.0..0.08);
    let (h, w) = (height as f64, width as f64);

    enum Shape {
        Disc { cy: f64, cx: f64, rad: f64 },
        Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
    }
    let shapes: Vec<(Shape, [f64; 3])> = (0..r.gen_range(2..6))
        .map(|_| {
            let shape = if r.gen_bool(0.5) {
                Shape::Disc {
                    cy: r.gen_range(0.0..h),
                    cx: r.gen_range(0.0..w),
                    rad: r.gen_range(0.08..0.3) * h.min(w),
                }
            } else {
                let (y0, x0) = (r.gen_range(0.0..h), r.gen_range(0.0..w));
                Shape::Rect {
                    y0,
                    x0,
                    y1: y0 + r.gen_range(0.1..0.5) * h,
                    x1: x0 + r.gen_range(0.1..0.5) * w,
                }
            };
            (shape, color(&mut r))
        })
        .collect();

    Tensor::from_fn(3, height, width, |c, y, x| {
        let (yf, xf) = (y as f64 + 0.5, x as f64 + 0.5);
        let t = ((ca * xf / w + sa * yf / h) * 0.5 + 0.5).clamp(0.0, 1.0);
        let mut v = c0[c] * (1.0 - t) + c1[c] * t;
        for (shape, col) in &shapes {
            let inside = match *shape {
                Shape::Disc { cy, cx, rad } => (yf - cy).powi(2) + (xf - cx).powi(2) <= rad * rad,
                Shape::Rect { y0, x0, y1, x1 } => yf >= y0 && yf < y1 && xf >= x0 && xf < x1,
            };
            if inside {
                v = col[c];
            }
        }
        v += amp * (freq * xf + 0.7 * freq * yf).sin();
        T::of(v.clamp(0.05, 0.95))
    })
}

/// `n` clean scenes named `0000`, `0001`, ...
pub fn toy_cleans<T: Real>(n: usize, size: usize, seed: u64) -> Vec<Tensor<T>> {
    (0..n).map(|i| toy_scene(size, size, seed, i as u64)).collect()
}

/// Clean scenes paired with toy-camera noise, tagged `real`.
pub fn toy_real_dataset<T: Real>(n: usize, size: usize, camera: &ToyCameraConfig, seed: u64) -> Result<PairedDataset<T>> {
    camera.validate()?;
    let mut ds = PairedDataset::new();
    for (i, clean) in toy_cleans::<T>(n, size, seed).into_iter().enumerate() {
        let mut r = rng::keyed(&[stream::TOY_NOISE, camera.seed, seed, i as u64]);
        let noisy = simulate_with(&clean, camera, &mut r)?;
        ds.push(format!("{i:04}"), clean, noisy, SourceTag::Real)?;
    }
    Ok(ds)
}

/// Pairs each clean image with a fresh draw of synthetic noise, tagged
/// `synthetic`.
pub fn synthetic_dataset<'a, T: Real>(
    cleans: impl IntoIterator<Item = &'a Tensor<T>>,
    noise: &SynthNoise,
    seed: u64,
) -> Result<PairedDataset<T>> {
    noise.validate()?;
    let mut ds = PairedDataset::new();
    for (i, clean) in cleans.into_iter().enumerate() {
        let noisy = noise.apply(clean, &[seed, i as u64]);
        ds.push(format!("{i:04}"), clean.clone(), noisy, SourceTag::Synthetic)?;
    }
    Ok(ds)
}
