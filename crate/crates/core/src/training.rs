//! Alternating adversarial training, run directories and denoiser finetuning.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::denoiser::{fit_denoiser, Denoiser, DenoiserTrainConfig};
use crate::discriminator::{
    relativistic_backward, relativistic_scores, Discriminator, DiscriminatorConfig, DiscriminatorKind,
};
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorConfig};
use crate::imaging::{sample_batch, write_png16, Pair, PairedDataset};
use crate::losses::{
    adversarial_losses, discriminator_loss_grads, generator_loss_grads, l1_and_grad, perceptual_and_grad,
    total_objective, FeatureExtractor, FeatureKind, LossParts, LossWeights,
};
use crate::nn::Module;
use crate::noise::SynthNoise;
use crate::optim::{Adam, CosineSchedule};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub batch: usize,
    pub patch: usize,
    pub lr_init: f64,
    pub lr_final: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub seed: u64,
    pub losses: LossWeights,
    /// 0 disables periodic checkpoints; the final one is always written.
    pub checkpoint_every: u64,
    /// 0 disables periodic sample images.
    pub sample_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 20_000,
            batch: 8,
            patch: 64,
            lr_init: 2e-4,
            lr_final: 1e-6,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            seed: 0,
            losses: LossWeights::default(),
            checkpoint_every: 1000,
            sample_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch must be >= 1".into()));
        }
        if self.patch == 0 || !self.patch.is_multiple_of(4) {
            return Err(Error::Config(format!("patch {} must be a positive multiple of 4", self.patch)));
        }
        if !(self.lr_final <= self.lr_init) || self.lr_final < 0.0 {
            return Err(Error::Config("need 0 <= lr_final <= lr_init".into()));
        }
        for b in [self.adam_beta1, self.adam_beta2] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("adam beta {b} outside (0,1)")));
            }
        }
        self.losses.validate()
    }

    pub fn schedule(&self) -> CosineSchedule {
        CosineSchedule {
            lr_init: self.lr_init,
            lr_final: self.lr_final,
            total_steps: self.total_steps,
        }
    }
}

/// One line of `log.jsonl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub l1: f64,
    pub lp: f64,
    pub ld: f64,
    pub lg: f64,
    pub total: f64,
}

/// Everything the adversarial phase reads or writes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gan<T> {
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    denoiser: Denoiser<T>,
    features: FeatureExtractor<T>,
    opt_g: Adam<T>,
    opt_d: Adam<T>,
    step: u64,
}

/// Intermediate values of the generator sub-step reused by the
/// discriminator sub-step.
struct AdversarialPass<T> {
    p_real: Vec<Tensor<T>>,
    p_fake: Vec<Tensor<T>>,
    real_caches: Vec<crate::discriminator::DiscriminatorCache<T>>,
    fake_caches: Vec<crate::discriminator::DiscriminatorCache<T>>,
}

impl<T: Real> Gan<T> {
    /// The discriminator kind follows `weights.use_pixel_d`; the denoiser is
    /// frozen.
    pub fn new(
        generator: GeneratorConfig,
        discriminator: DiscriminatorConfig,
        mut denoiser: Denoiser<T>,
        features: FeatureExtractor<T>,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let kind = if cfg.losses.use_pixel_d {
            DiscriminatorKind::Pixel
        } else {
            DiscriminatorKind::Image
        };
        let generator = Generator::new(generator)?;
        let discriminator = Discriminator::new(DiscriminatorConfig { kind, ..discriminator })?;
        denoiser.freeze();
        Ok(Self {
            opt_g: Adam::new(&generator, cfg.adam_beta1, cfg.adam_beta2),
            opt_d: Adam::new(&discriminator, cfg.adam_beta1, cfg.adam_beta2),
            generator,
            discriminator,
            denoiser,
            features,
            step: 0,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn denoiser(&self) -> &Denoiser<T> {
        &self.denoiser
    }

    pub fn features(&self) -> &FeatureExtractor<T> {
        &self.features
    }

    /// Generator sub-step followed by discriminator sub-step on one batch of
    /// `(I_syn, I_rn)` pairs.
    pub fn gan_step(&mut self, batch: &[Pair<T>], cfg: &TrainConfig) -> Result<StepRecord> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let lr = cfg.schedule().lr_at(self.step)?;
        let (parts, adv) = self.generator_grads(batch, &cfg.losses)?;
        self.opt_g.step(&mut self.generator, lr, "generator")?;
        self.discriminator_grads(&adv, &cfg.losses);
        self.opt_d.step(&mut self.discriminator, lr, "discriminator")?;
        let step = self.step;
        self.step += 1;
        Ok(StepRecord {
            step,
            l1: parts.l1,
            lp: parts.lp,
            ld: parts.ld,
            lg: parts.lg,
            total: total_objective(&parts, &cfg.losses),
        })
    }

    /// Overwrites the generator gradients with those of
    /// `L1 + λ_p·L_p + λ_Ra·L_G` on one batch; nothing is updated.
    pub fn generator_gradients(&mut self, batch: &[Pair<T>], weights: &LossWeights) -> Result<LossParts> {
        Ok(self.generator_grads(batch, weights)?.0)
    }

    /// Overwrites the discriminator gradients with those of `λ_Ra·L_D` on one
    /// batch; nothing is updated.
    pub fn discriminator_gradients(&mut self, batch: &[Pair<T>], weights: &LossWeights) -> Result<LossParts> {
        let fakes = batch
            .iter()
            .map(|p| self.generator.forward(&p.0))
            .collect::<Result<Vec<_>>>()?;
        let reals: Vec<Tensor<T>> = batch.iter().map(|p| p.1.clone()).collect();
        let adv = self.adversarial_pass(&reals, &fakes)?;
        let (ld, lg) = adversarial_losses(&adv.p_real, &adv.p_fake);
        self.discriminator_grads(&adv, weights);
        Ok(LossParts { l1: 0.0, lp: 0.0, ld, lg })
    }

    fn generator_grads(&mut self, batch: &[Pair<T>], w: &LossWeights) -> Result<(LossParts, AdversarialPass<T>)> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let w = *w;
        let step = self.step;
        self.generator.zero_grad();
        let mut fakes = Vec::with_capacity(batch.len());
        let mut g_caches = Vec::with_capacity(batch.len());
        for (syn, _) in batch {
            let (f, c) = self.generator.forward_cached(syn)?;
            fakes.push(f);
            g_caches.push(c);
        }
        let reals: Vec<Tensor<T>> = batch.iter().map(|p| p.1.clone()).collect();

        let (fd, fd_caches, rd) = if w.use_dd {
            let mut fd = Vec::with_capacity(fakes.len());
            let mut caches = Vec::with_capacity(fakes.len());
            for f in &fakes {
                let (o, c) = self.denoiser.forward_cached(f)?;
                fd.push(o);
                caches.push(c);
            }
            let rd = reals.iter().map(|r| self.denoiser.denoise(r)).collect::<Result<Vec<_>>>()?;
            (fd, Some(caches), rd)
        } else {
            (fakes.clone(), None, reals.clone())
        };
        let (l1, mut g_img) = l1_and_grad(&fd, &rd)?;
        let mut lp = 0.0;
        if w.use_lp {
            let (v, g) = perceptual_and_grad(&self.features, &fd, &rd)?;
            lp = v;
            let k = T::of(w.lambda_p);
            for (a, b) in g_img.iter_mut().zip(g) {
                a.add_assign(&b.map(|x| x * k));
            }
        }
        let mut g_fake: Vec<Tensor<T>> = match &fd_caches {
            Some(caches) => caches
                .iter()
                .zip(&g_img)
                .map(|(c, g)| self.denoiser.backward_input(c, g))
                .collect(),
            None => g_img,
        };

        let adv = self.adversarial_pass(&reals, &fakes)?;
        let (ld, lg) = adversarial_losses(&adv.p_real, &adv.p_fake);
        let parts = LossParts { l1, lp, ld, lg };
        for (name, v) in [("l1", l1), ("lp", lp), ("ld", ld), ("lg", lg)] {
            if !v.is_finite() {
                return Err(Error::NonFinite { step, loss: name });
            }
        }
        if w.lambda_ra > 0.0 {
            let gg = generator_loss_grads(&adv.p_real, &adv.p_fake);
            let mode = self.discriminator.config().batch_mean;
            let (_, dcd_fake) = relativistic_backward(&adv.p_real, &adv.p_fake, &gg.real, &gg.fake, mode);
            let k = T::of(w.lambda_ra);
            for ((g, c), d) in g_fake.iter_mut().zip(&adv.fake_caches).zip(dcd_fake) {
                let dx = self.discriminator.backward_input(c, &d.map(|x| x * k));
                g.add_assign(&dx);
            }
        }
        for (c, g) in g_caches.into_iter().zip(&g_fake) {
            self.generator.backward(c, g)?;
        }
        Ok((parts, adv))
    }

    /// D gradients on the same (detached) fakes the generator step saw.
    fn discriminator_grads(&mut self, adv: &AdversarialPass<T>, w: &LossWeights) {
        self.discriminator.zero_grad();
        if w.lambda_ra > 0.0 {
            let gd = discriminator_loss_grads(&adv.p_real, &adv.p_fake);
            let mode = self.discriminator.config().batch_mean;
            let (dr, df) = relativistic_backward(&adv.p_real, &adv.p_fake, &gd.real, &gd.fake, mode);
            let k = T::of(w.lambda_ra);
            for (c, d) in adv.real_caches.iter().zip(dr) {
                self.discriminator.backward_params(c, &d.map(|x| x * k));
            }
            for (c, d) in adv.fake_caches.iter().zip(df) {
                self.discriminator.backward_params(c, &d.map(|x| x * k));
            }
        }
    }

    fn adversarial_pass(&self, reals: &[Tensor<T>], fakes: &[Tensor<T>]) -> Result<AdversarialPass<T>> {
        let mut cd_real = Vec::with_capacity(reals.len());
        let mut real_caches = Vec::with_capacity(reals.len());
        for r in reals {
            let (s, c) = self.discriminator.forward_cached(r)?;
            cd_real.push(s);
            real_caches.push(c);
        }
        let mut cd_fake = Vec::with_capacity(fakes.len());
        let mut fake_caches = Vec::with_capacity(fakes.len());
        for f in fakes {
            let (s, c) = self.discriminator.forward_cached(f)?;
            cd_fake.push(s);
            fake_caches.push(c);
        }
        let (p_real, p_fake) = relativistic_scores(&cd_real, &cd_fake, self.discriminator.config().batch_mean)?;
        Ok(AdversarialPass {
            p_real,
            p_fake,
            real_caches,
            fake_caches,
        })
    }

    /// Full training state: networks, optimizer moments, step counter.
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new();
        ck.set_meta("step", self.step.to_string());
        ck.set_meta("precision", format!("{:?}", T::PRECISION).to_lowercase());
        ck.set_config("generator", self.generator.config())?;
        ck.set_config("discriminator", self.discriminator.config())?;
        ck.set_config("denoiser", self.denoiser.config())?;
        ck.store_module("generator", &self.generator);
        ck.store_module("discriminator", &self.discriminator);
        ck.store_module("denoiser", &self.denoiser);
        self.opt_g.store(&mut ck, "adam_g");
        self.opt_d.store(&mut ck, "adam_d");
        store_features(&mut ck, &self.features);
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut generator = Generator::new(ck.config("generator")?)?;
        ck.load_module("generator", &mut generator)?;
        let mut discriminator = Discriminator::new(ck.config("discriminator")?)?;
        ck.load_module("discriminator", &mut discriminator)?;
        let denoiser = denoiser_from_checkpoint(ck)?;
        let features = load_features(ck)?;
        let mut opt_g = Adam::new(&generator, 0.9, 0.999);
        opt_g.load(ck, "adam_g")?;
        let mut opt_d = Adam::new(&discriminator, 0.9, 0.999);
        opt_d.load(ck, "adam_d")?;
        let step = ck
            .meta("step")?
            .parse()
            .map_err(|e| Error::Checkpoint(format!("bad step: {e}")))?;
        Ok(Self {
            generator,
            discriminator,
            denoiser,
            features,
            opt_g,
            opt_d,
            step,
        })
    }

}

fn store_features<T: Real>(ck: &mut Checkpoint, fx: &FeatureExtractor<T>) {
    let kind = serde_json::to_string(&fx.kind()).expect("kind serializes");
    ck.set_meta("features.kind", kind);
    if let FeatureExtractor::FixedRandomConv(s) | FeatureExtractor::Imported(s) = fx {
        let strides: Vec<String> = s.layers().iter().map(|l| l.stride().to_string()).collect();
        ck.set_meta("features.strides", strides.join(","));
        for (i, l) in s.layers().iter().enumerate() {
            for (name, p) in l.named_params() {
                ck.insert(format!("features/conv{i}.{name}"), p.shape.clone(), &p.value);
            }
        }
    }
}

fn load_features<T: Real>(ck: &Checkpoint) -> Result<FeatureExtractor<T>> {
    let kind: FeatureKind = serde_json::from_str(ck.meta("features.kind")?)?;
    Ok(match (kind, FeatureExtractor::import(ck)) {
        (FeatureKind::Identity, _) => FeatureExtractor::Identity,
        (FeatureKind::FixedRandomConv, Ok(FeatureExtractor::Imported(s))) => FeatureExtractor::FixedRandomConv(s),
        (_, imported) => imported?,
    })
}

/// A standalone denoiser checkpoint (`denoiser/` namespace plus config).
pub fn denoiser_checkpoint<T: Real>(d: &Denoiser<T>) -> Result<Checkpoint> {
    let mut ck = Checkpoint::new();
    ck.set_config("denoiser", d.config())?;
    ck.store_module("denoiser", d);
    Ok(ck)
}

/// Reads the `denoiser/` namespace; the result is frozen.
pub fn denoiser_from_checkpoint<T: Real>(ck: &Checkpoint) -> Result<Denoiser<T>> {
    let mut d = Denoiser::new(ck.config("denoiser")?)?;
    ck.load_module("denoiser", &mut d)?;
    d.freeze();
    Ok(d)
}

/// Reads the `generator/` namespace.
pub fn generator_from_checkpoint<T: Real>(ck: &Checkpoint) -> Result<Generator<T>> {
    let mut g = Generator::new(ck.config("generator")?)?;
    ck.load_module("generator", &mut g)?;
    Ok(g)
}

/// Output directory of one training run.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(root.join("ckpt"))?;
        std::fs::create_dir_all(root.join("samples"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_config<C: Serialize>(&self, config: &C) -> Result<()> {
        std::fs::write(self.root.join("config.json"), serde_json::to_string_pretty(config)?)?;
        Ok(())
    }

    pub fn append_log<R: Serialize>(&self, record: &R) -> Result<()> {
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join("log.jsonl"))?;
        writeln!(f, "{}", serde_json::to_string(record)?)?;
        Ok(())
    }

    pub fn checkpoint_path(&self, step: u64) -> PathBuf {
        self.root.join("ckpt").join(format!("step-{step}"))
    }

    /// The checkpoint with the highest step number, if any.
    pub fn latest_checkpoint(&self) -> Result<Option<PathBuf>> {
        let mut best: Option<(u64, PathBuf)> = None;
        for entry in std::fs::read_dir(self.root.join("ckpt"))? {
            let path = entry?.path();
            let step = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_prefix("step-"))
                .and_then(|n| n.parse::<u64>().ok());
            if let Some(s) = step {
                if best.as_ref().is_none_or(|(b, _)| s > *b) {
                    best = Some((s, path));
                }
            }
        }
        Ok(best.map(|(_, p)| p))
    }

    fn write_sample<T: Real>(&self, step: u64, img: &Tensor<T>) -> Result<()> {
        write_png16(&self.root.join("samples").join(format!("step-{step}.png")), &img.clip01())
    }

    /// Writes the offending batch next to a JSON note; used on NaN aborts.
    pub fn write_diagnostic<T: Real>(&self, step: u64, loss: &str, batch: &[Pair<T>]) -> Result<PathBuf> {
        let dir = self.root.join(format!("diagnostic-step-{step}"));
        std::fs::create_dir_all(&dir)?;
        for (i, (syn, real)) in batch.iter().enumerate() {
            write_png16(&dir.join(format!("{i:02}-syn.png")), syn)?;
            write_png16(&dir.join(format!("{i:02}-real.png")), real)?;
        }
        let note = serde_json::json!({ "step": step, "loss": loss, "batch": batch.len() });
        std::fs::write(dir.join("diagnostic.json"), serde_json::to_string_pretty(&note)?)?;
        Ok(dir)
    }
}

/// The GAN batch for `step`: patches of real pairs, with `I_syn` drawn
/// from `noise` on each clean patch.
pub fn gan_batch<T: Real>(
    real: &PairedDataset<T>,
    noise: &SynthNoise,
    cfg: &TrainConfig,
    step: u64,
) -> Result<Vec<Pair<T>>> {
    let pairs = sample_batch(real, cfg.batch, cfg.patch, cfg.seed, step)?;
    Ok(pairs
        .into_iter()
        .enumerate()
        .map(|(b, (clean, noisy))| (noise.apply(&clean, &[cfg.seed, step, b as u64]), noisy))
        .collect())
}

/// Runs `gan_step` from `gan.step()` up to `cfg.total_steps`.
pub fn train_gan<T: Real>(
    gan: &mut Gan<T>,
    real: &PairedDataset<T>,
    noise: &SynthNoise,
    cfg: &TrainConfig,
    run: Option<&RunDir>,
) -> Result<Vec<StepRecord>> {
    cfg.validate()?;
    noise.validate()?;
    if real.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut records = Vec::new();
    while gan.step < cfg.total_steps {
        let batch = gan_batch(real, noise, cfg, gan.step)?;
        let record = match gan.gan_step(&batch, cfg) {
            Ok(r) => r,
            Err(Error::NonFinite { step, loss }) => {
                if let Some(run) = run {
                    run.write_diagnostic(step, loss, &batch)?;
                }
                return Err(Error::NonFinite { step, loss });
            }
            Err(e) => return Err(e),
        };
        let done = gan.step;
        if let Some(run) = run {
            run.append_log(&record)?;
            if cfg.checkpoint_every > 0 && done.is_multiple_of(cfg.checkpoint_every) {
                gan.to_checkpoint()?.save(&run.checkpoint_path(done))?;
            }
            if cfg.sample_every > 0 && done.is_multiple_of(cfg.sample_every) {
                run.write_sample(done, &gan.generator.forward(&batch[0].0)?)?;
            }
        }
        records.push(record);
    }
    if let Some(run) = run {
        let path = run.checkpoint_path(gan.step);
        if !path.exists() {
            gan.to_checkpoint()?.save(&path)?;
        }
    }
    Ok(records)
}

/// Finetune defaults: a constant desk-scale learning rate.
pub fn default_finetune_config() -> DenoiserTrainConfig {
    DenoiserTrainConfig {
        steps: 1000,
        lr_init: 1e-4,
        lr_final: 1e-4,
        ..DenoiserTrainConfig::default()
    }
}

/// Continues training a copy of `base` on `mixed`; the result is frozen.
pub fn finetune_denoiser<T: Real>(
    base: &Denoiser<T>,
    mixed: &PairedDataset<T>,
    cfg: &DenoiserTrainConfig,
) -> Result<(Denoiser<T>, Vec<f64>)> {
    if mixed.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = base.clone();
    let curve = fit_denoiser(&mut model, mixed, cfg, |_, _| {})?;
    Ok((model, curve))
}
