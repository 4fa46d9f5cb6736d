//! End-to-end toy experiments: denoiser, adversarial training, generation,
//! domain report, downstream training and finetuning.

use std::time::Instant;

use pngan::denoiser::{train_denoiser, Denoiser, DenoiserConfig, DenoiserTrainConfig};
use pngan::discriminator::DiscriminatorConfig;
use pngan::evaluation::{
    domain_report, median_bandwidth, mmd_squared, quality, residual_patches, residual_stats, ReportConfig,
};
use pngan::generator::{generate_dataset, Generator, GeneratorConfig};
use pngan::imaging::{mix_datasets, MixSpec, PairedDataset, SourceTag};
use pngan::losses::FeatureExtractor;
use pngan::noise::{SynthNoise, ToyCameraConfig};
use pngan::toy::{synthetic_dataset, toy_real_dataset};
use pngan::training::{default_finetune_config, finetune_denoiser, train_gan, Gan, TrainConfig};

use crate::Outcome;

const NOISE: SynthNoise = SynthNoise::Awgn { sigma_n: 50.0 };

pub struct Profile {
    pub name: &'static str,
    pairs: usize,
    train: usize,
    size: usize,
    seeds: u64,
    denoiser: (usize, usize),
    denoiser_steps: u64,
    patch: usize,
    gen_channels: usize,
    disc_width: usize,
    gan_steps: u64,
    downstream_steps: u64,
    finetune_steps: u64,
}

impl Profile {
    pub fn from_env() -> Self {
        let reduced = Profile {
            name: "reduced",
            pairs: 500,
            train: 450,
            size: 64,
            seeds: 5,
            denoiser: (5, 16),
            denoiser_steps: 600,
            patch: 32,
            gen_channels: 8,
            disc_width: 16,
            gan_steps: 600,
            downstream_steps: 800,
            finetune_steps: 400,
        };
        match std::env::var("PNGAN_ACCEPTANCE_PROFILE").as_deref() {
            Ok("full") => Profile {
                name: "full",
                denoiser: (8, 64),
                denoiser_steps: 5000,
                patch: 64,
                gen_channels: 64,
                disc_width: 64,
                gan_steps: 20_000,
                downstream_steps: 5000,
                finetune_steps: 1000,
                ..reduced
            },
            _ => reduced,
        }
    }

    fn denoiser_config(&self, seed: u64) -> DenoiserConfig {
        DenoiserConfig {
            depth: self.denoiser.0,
            width: self.denoiser.1,
            seed,
        }
    }

    fn denoiser_training(&self, steps: u64, seed: u64) -> DenoiserTrainConfig {
        DenoiserTrainConfig {
            steps,
            batch: 8,
            patch: self.patch,
            seed,
            ..Default::default()
        }
    }
}

pub struct Artifacts {
    train: PairedDataset<f32>,
    test: PairedDataset<f32>,
    generator: Generator<f32>,
    generated_train: Option<PairedDataset<f32>>,
    awgn_denoiser: Option<Denoiser<f32>>,
}

fn mean_residual(ds: &PairedDataset<f32>) -> (f64, f64) {
    let (mut sd, mut ac) = (0.0, 0.0);
    for (clean, noisy) in ds.pairs() {
        let s = residual_stats(noisy, clean).unwrap();
        sd += s.std.iter().sum::<f64>() / 3.0;
        ac += 0.5 * (s.autocorr_h + s.autocorr_v);
    }
    (sd / ds.len() as f64, ac / ds.len() as f64)
}

pub fn domain_gap(p: &Profile) -> (Outcome, Artifacts) {
    let start = Instant::now();
    let mut ratios = Vec::new();
    let mut kept = None;
    for seed in 0..p.seeds {
        let camera = ToyCameraConfig { seed, ..Default::default() };
        let all = toy_real_dataset::<f32>(p.pairs, p.size, &camera, seed).unwrap();
        let (train, test) = all.split_at(p.train);
        let (den, _) = train_denoiser(&train, &p.denoiser_config(seed), &p.denoiser_training(p.denoiser_steps, seed)).unwrap();
        let cfg = TrainConfig {
            total_steps: p.gan_steps,
            batch: 8,
            patch: p.patch,
            seed,
            ..Default::default()
        };
        let mut gan = Gan::new(
            GeneratorConfig { channels: p.gen_channels, seed, ..Default::default() },
            DiscriminatorConfig { width: p.disc_width, seed: seed + 100, ..Default::default() },
            den,
            FeatureExtractor::fixed_random(seed),
            &cfg,
        )
        .unwrap();
        train_gan(&mut gan, &train, &NOISE, &cfg, None).unwrap();

        let cleans: Vec<_> = test.cleans().collect();
        let key = 1000 + seed;
        let generated = generate_dataset(cleans.iter().copied(), &NOISE, &gan.generator, key).unwrap();
        let baseline = synthetic_dataset(cleans.iter().copied(), &NOISE, key).unwrap();
        let rc = ReportConfig { seed, ..Default::default() };
        let rep = domain_report(&generated, &test, &baseline, &rc).unwrap();

        // Diagnostics: a noise-free control and a kernel sized to the real residuals.
        let noise_free = synthetic_dataset(cleans.iter().copied(), &SynthNoise::Awgn { sigma_n: 0.0 }, key).unwrap();
        let control = domain_report(&noise_free, &test, &baseline, &rc).unwrap();
        let (pr, pg, pb) = (
            residual_patches(&test, &rc).unwrap(),
            residual_patches(&generated, &rc).unwrap(),
            residual_patches(&baseline, &rc).unwrap(),
        );
        let h = median_bandwidth(&[&pr]);
        let narrow = mmd_squared(&pr, &pg, Some(h)).unwrap().value / mmd_squared(&pr, &pb, Some(h)).unwrap().value;
        let (sr, ar) = mean_residual(&test);
        let (sg, ag) = mean_residual(&generated);
        println!(
            "    seed {seed}: ratio {:.4} (h {:.3}); real-kernel ratio {narrow:.4}; noise-free control {:.4}; \
             residual std real {sr:.4} generated {sg:.4}; lag-1 autocorr real {ar:.3} generated {ag:.3}",
            rep.ratio, rep.bandwidth, control.ratio
        );
        ratios.push(rep.ratio);
        if kept.is_none() {
            kept = Some(Artifacts {
                train,
                test,
                generator: gan.generator.clone(),
                generated_train: None,
                awgn_denoiser: None,
            });
        }
    }
    let hits = ratios.iter().filter(|&&r| r < 0.7).count();
    let secs = start.elapsed().as_secs_f64();
    let needed = (4 * p.seeds).div_ceil(5) as usize;
    let outcome = Outcome {
        pass: hits >= needed && secs <= 8.0 * 3600.0,
        detail: format!(
            "ratio < 0.7 in {hits}/{} seeds (ratios {}), {:.0} min",
            p.seeds,
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", "),
            secs / 60.0
        ),
    };
    (outcome, kept.expect("at least one seed"))
}

pub fn downstream(p: &Profile, art: &mut Artifacts) -> Outcome {
    let start = Instant::now();
    let cleans: Vec<_> = art.train.cleans().collect();
    let generated = generate_dataset(cleans.iter().copied(), &NOISE, &art.generator, 2000).unwrap();
    let awgn = synthetic_dataset(cleans.iter().copied(), &NOISE, 2000).unwrap();
    let train = p.denoiser_training(p.downstream_steps, 0);
    let (dg, _) = train_denoiser(&generated, &p.denoiser_config(0), &train).unwrap();
    let (da, _) = train_denoiser(&awgn, &p.denoiser_config(0), &train).unwrap();
    let (pg, _) = quality(&art.test, |x| dg.denoise(x)).unwrap();
    let (pa, _) = quality(&art.test, |x| da.denoise(x)).unwrap();
    let (pi, _) = quality(&art.test, |x| Ok(x.clone())).unwrap();
    art.generated_train = Some(generated);
    art.awgn_denoiser = Some(da);
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: pg - pa >= 1.0 && secs <= 1800.0,
        detail: format!(
            "PSNR generated-trained {pg:.2} dB vs AWGN-trained {pa:.2} dB ({:+.2} dB; noisy input {pi:.2} dB)",
            pg - pa
        ),
    }
}

pub fn finetune_mixing(p: &Profile, art: &mut Artifacts) -> Outcome {
    let generated = art.generated_train.as_ref().expect("downstream ran first");
    let base = art.awgn_denoiser.as_ref().expect("downstream ran first");
    let n = art.train.len();
    let mut arithmetic = true;
    for step in 0..=5usize {
        let q = step as f64 / 5.0;
        let mixed = mix_datasets(&art.train, generated, &MixSpec { q, seed: 0 }).unwrap();
        let extra = n * step / 5;
        arithmetic &= mixed.len() == n + extra;
        arithmetic &= mixed.pairs()[..n] == art.train.pairs()[..];
        arithmetic &= mixed.tags()[n..].iter().all(|t| *t == SourceTag::Generated);
    }
    let cfg = DenoiserTrainConfig {
        steps: p.finetune_steps,
        batch: 8,
        patch: p.patch,
        ..default_finetune_config()
    };
    let psnr_at = |q: f64| {
        let mixed = mix_datasets(&art.train, generated, &MixSpec { q, seed: 0 }).unwrap();
        let (tuned, _) = finetune_denoiser(base, &mixed, &cfg).unwrap();
        quality(&art.test, |x| tuned.denoise(x)).unwrap().0
    };
    let (p0, p6) = (psnr_at(0.0), psnr_at(0.6));
    let (pb, _) = quality(&art.test, |x| base.denoise(x)).unwrap();
    Outcome {
        pass: arithmetic && p6 >= p0,
        detail: format!(
            "mix sizes exact for q in 0..1 step 0.2: {arithmetic}; PSNR q=0.6 {p6:.2} dB vs q=0 {p0:.2} dB ({:+.2} dB; base {pb:.2} dB)",
            p6 - p0
        ),
    }
}
