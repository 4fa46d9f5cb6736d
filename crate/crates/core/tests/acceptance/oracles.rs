//! Plain-loop reference implementations, written against the parameter
//! names only. Images are `[channel][row][col]`.

use std::collections::HashMap;

use pngan::nn::Module;
use pngan::Tensor;

pub type Img = Vec<Vec<Vec<f64>>>;
pub type Params = HashMap<String, Vec<f64>>;

pub fn params(m: &impl Module<f64>) -> Params {
    m.named_params()
        .into_iter()
        .map(|(n, p)| (n, p.value.clone()))
        .collect()
}

pub fn to_img(t: &Tensor<f64>) -> Img {
    let (c, h, w) = t.dims();
    (0..c)
        .map(|ch| (0..h).map(|y| (0..w).map(|x| t.get(ch, y, x)).collect()).collect())
        .collect()
}

pub fn flat(img: &Img) -> Vec<f64> {
    img.iter().flatten().flatten().copied().collect()
}

fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    j as usize
}

/// Stride-1 convolution, reflect padding `k/2`; weight `[out][in][k][k]`.
pub fn conv(x: &Img, w: &[f64], b: &[f64]) -> Img {
    conv_strided(x, w, b, 1)
}

pub fn conv_strided(x: &Img, w: &[f64], b: &[f64], stride: usize) -> Img {
    let cin = x.len();
    let (h, wd) = (x[0].len(), x[0][0].len());
    let cout = b.len();
    let k = ((w.len() / (cout * cin)) as f64).sqrt() as usize;
    let pad = (k / 2) as isize;
    let (oh, ow) = ((h - 1) / stride + 1, (wd - 1) / stride + 1);
    let mut out = vec![vec![vec![0.0; ow]; oh]; cout];
    for o in 0..cout {
        for y in 0..oh {
            for xx in 0..ow {
                let mut acc = b[o];
                for i in 0..cin {
                    for dy in 0..k {
                        for dx in 0..k {
                            let sy = mirror((y * stride) as isize + dy as isize - pad, h);
                            let sx = mirror((xx * stride) as isize + dx as isize - pad, wd);
                            acc += w[((o * cin + i) * k + dy) * k + dx] * x[i][sy][sx];
                        }
                    }
                }
                out[o][y][xx] = acc;
            }
        }
    }
    out
}

fn add(a: &Img, b: &Img) -> Img {
    a.iter()
        .zip(b)
        .map(|(pa, pb)| {
            pa.iter()
                .zip(pb)
                .map(|(ra, rb)| ra.iter().zip(rb).map(|(u, v)| u + v).collect())
                .collect()
        })
        .collect()
}

pub fn fca(x: &Img, kernel: &[f64], bias: f64) -> Img {
    let c = x.len();
    let pooled: Vec<f64> = x
        .iter()
        .map(|p| p.iter().flatten().sum::<f64>() / (p.len() * p[0].len()) as f64)
        .collect();
    let r = kernel.len() / 2;
    (0..c)
        .map(|ch| {
            let mut z = bias;
            for (j, kv) in kernel.iter().enumerate() {
                let src = ch as isize + j as isize - r as isize;
                if src >= 0 && (src as usize) < c {
                    z += kv * pooled[src as usize];
                }
            }
            let gate = 1.0 + 1.0 / (1.0 + (-z).exp());
            x[ch].iter().map(|row| row.iter().map(|v| v * gate).collect()).collect()
        })
        .collect()
}

fn blur_half(x: &Img) -> Img {
    let t = [0.25, 0.5, 0.25];
    let (h, w) = (x[0].len(), x[0][0].len());
    x.iter()
        .map(|p| {
            (0..h / 2)
                .map(|oy| {
                    (0..w / 2)
                        .map(|ox| {
                            let mut acc = 0.0;
                            for a in 0..3 {
                                for b in 0..3 {
                                    let sy = mirror(2 * oy as isize + a as isize - 1, h);
                                    let sx = mirror(2 * ox as isize + b as isize - 1, w);
                                    acc += t[a] * t[b] * p[sy][sx];
                                }
                            }
                            acc
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Half-pixel bilinear resize.
pub fn resize(x: &Img, oh: usize, ow: usize) -> Img {
    let (h, w) = (x[0].len(), x[0][0].len());
    let coord = |d: usize, n_in: usize, n_out: usize| {
        let s = ((d as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    x.iter()
        .map(|p| {
            (0..oh)
                .map(|y| {
                    let (y0, y1, fy) = coord(y, h, oh);
                    (0..ow)
                        .map(|xx| {
                            let (x0, x1, fx) = coord(xx, w, ow);
                            (1.0 - fy) * ((1.0 - fx) * p[y0][x0] + fx * p[y0][x1])
                                + fy * ((1.0 - fx) * p[y1][x0] + fx * p[y1][x1])
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy)]
pub struct Arch {
    pub groups: usize,
    pub blocks: usize,
    pub multiscale: bool,
    pub sid: bool,
    pub fca: bool,
}

fn mab(x: &Img, p: &Params, pre: &str, a: Arch) -> Img {
    let get = |n: &str| &p[&format!("{pre}.{n}")];
    let att = |v: &Img, tag: &str| {
        if a.fca {
            fca(v, get(&format!("{tag}.kernel")), get(&format!("{tag}.bias"))[0])
        } else {
            v.clone()
        }
    };
    let (h, w) = (x[0].len(), x[0][0].len());
    let mut cat = att(x, "fca1");
    if a.multiscale {
        for f in [2usize, 4] {
            let down = if a.sid {
                let mut d = blur_half(x);
                if f == 4 {
                    d = blur_half(&d);
                }
                d
            } else {
                resize(x, h / f, w / f)
            };
            let up = resize(&att(&down, &format!("fca{f}")), h, w);
            let tag = format!("up{f}");
            cat.extend(conv(&up, get(&format!("{tag}.weight")), get(&format!("{tag}.bias"))));
        }
    }
    add(x, &conv(&cat, get("fusion.weight"), get("fusion.bias")))
}

fn srg(x: &Img, p: &Params, pre: &str, a: Arch) -> Img {
    let mut h = conv(x, &p[&format!("{pre}.entry.weight")], &p[&format!("{pre}.entry.bias")]);
    for j in 0..a.blocks {
        h = mab(&h, p, &format!("{pre}.mab{j}"), a);
    }
    add(x, &conv(&h, &p[&format!("{pre}.exit.weight")], &p[&format!("{pre}.exit.bias")]))
}

pub fn generator(x: &Img, p: &Params, a: Arch) -> Img {
    let mut h = conv(x, &p["head.weight"], &p["head.bias"]);
    for g in 0..a.groups {
        h = srg(&h, p, &format!("srg{g}"), a);
    }
    add(x, &conv(&h, &p["tail.weight"], &p["tail.bias"]))
}

/// Raw score map; the image-level variant uses stride-2 layers and
/// averages the final map to one value.
pub fn discriminator(x: &Img, p: &Params, image_level: bool) -> Img {
    let stride = if image_level { 2 } else { 1 };
    let mut h = x.clone();
    for i in 0..4 {
        h = conv_strided(&h, &p[&format!("conv{i}.weight")], &p[&format!("conv{i}.bias")], stride);
        if i < 3 {
            for v in h.iter_mut().flatten().flatten() {
                if *v < 0.0 {
                    *v *= 0.2;
                }
            }
        }
    }
    if image_level {
        let all = flat(&h);
        vec![vec![vec![all.iter().sum::<f64>() / all.len() as f64]]]
    } else {
        h
    }
}

/// Relativistic pairing followed by the symmetric adversarial losses, from
/// raw score maps (each flattened). Returns `(l_d, l_g)`.
pub fn adversarial(cd_real: &[Vec<f64>], cd_fake: &[Vec<f64>], scalar_mean: bool) -> (f64, f64) {
    let n = cd_real[0].len();
    let opp_mean = |maps: &[Vec<f64>], i: usize| -> f64 {
        if scalar_mean {
            maps.iter().flatten().sum::<f64>() / (maps.len() * n) as f64
        } else {
            maps.iter().map(|m| m[i]).sum::<f64>() / maps.len() as f64
        }
    };
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let clamp = |p: f64| p.clamp(1e-7, 1.0 - 1e-7);
    let (mut ld, mut lg) = (0.0, 0.0);
    for i in 0..n {
        let (mf, mr) = (opp_mean(cd_fake, i), opp_mean(cd_real, i));
        let (mut lr, mut lr1, mut lf, mut lf1) = (0.0, 0.0, 0.0, 0.0);
        for m in cd_real {
            let p = clamp(sig(m[i] - mf));
            lr += p.ln();
            lr1 += (1.0 - p).ln();
        }
        for m in cd_fake {
            let p = clamp(sig(m[i] - mr));
            lf += p.ln();
            lf1 += (1.0 - p).ln();
        }
        let (br, bf) = (cd_real.len() as f64, cd_fake.len() as f64);
        ld -= lr / br + lf1 / bf;
        lg -= lr1 / br + lf / bf;
    }
    (ld / n as f64, lg / n as f64)
}

/// Unbiased squared MMD with a median-distance Gaussian kernel.
pub fn mmd(a: &[Vec<f64>], b: &[Vec<f64>]) -> (f64, f64) {
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    let pooled: Vec<&Vec<f64>> = a.iter().chain(b).collect();
    let mut d = Vec::new();
    for i in 0..pooled.len() {
        for j in 0..i {
            d.push(dist(pooled[i], pooled[j]));
        }
    }
    d.sort_by(f64::total_cmp);
    let med = if d.len() % 2 == 1 {
        d[d.len() / 2]
    } else {
        (d[d.len() / 2 - 1] + d[d.len() / 2]) / 2.0
    };
    let h = if med > 0.0 { med } else { 1.0 };
    let k = |x: &[f64], y: &[f64]| (-dist(x, y).powi(2) / (2.0 * h * h)).exp();
    let mean_off = |s: &[Vec<f64>]| {
        let mut acc = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if i != j {
                    acc += k(&s[i], &s[j]);
                }
            }
        }
        acc / (s.len() * (s.len() - 1)) as f64
    };
    let mut cross = 0.0;
    for x in a {
        for y in b {
            cross += k(x, y);
        }
    }
    (mean_off(a) + mean_off(b) - 2.0 * cross / (a.len() * b.len()) as f64, h)
}

/// Mean SSIM, 11×11 Gaussian window (σ 1.5), valid placements only.
pub fn ssim(a: &Img, b: &Img) -> f64 {
    let mut g = [[0.0; 11]; 11];
    let mut total = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / 4.5).exp();
            total += *v;
        }
    }
    let (c1, c2) = (1e-4, 9e-4);
    let mut acc_c = 0.0;
    for (pa, pb) in a.iter().zip(b) {
        let (h, w) = (pa.len(), pa[0].len());
        let mut acc = 0.0;
        for y in 0..=h - 11 {
            for x in 0..=w - 11 {
                let win = |f: &dyn Fn(f64, f64) -> f64| {
                    let mut s = 0.0;
                    for i in 0..11 {
                        for j in 0..11 {
                            s += g[i][j] / total * f(pa[y + i][x + j], pb[y + i][x + j]);
                        }
                    }
                    s
                };
                let (ma, mb) = (win(&|u, _| u), win(&|_, v| v));
                let va = win(&|u, _| (u - ma) * (u - ma));
                let vb = win(&|_, v| (v - mb) * (v - mb));
                let cov = win(&|u, v| (u - ma) * (v - mb));
                acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2)
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
        acc_c += acc / ((h - 10) * (w - 10)) as f64;
    }
    acc_c / a.len() as f64
}
