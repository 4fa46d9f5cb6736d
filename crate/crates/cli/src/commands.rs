use std::path::{Path, PathBuf};

use pngan::checkpoint::Checkpoint;
use pngan::config::RunConfig;
use pngan::denoiser::{fit_denoiser, Denoiser};
use pngan::evaluation::{domain_report, quality};
use pngan::generator::generate_dataset;
use pngan::imaging::{load_dataset, mix_datasets, save_dataset, PairedDataset, SourceTag};
use pngan::losses::{FeatureExtractor, FeatureKind};
use pngan::toy::{synthetic_dataset, toy_real_dataset};
use pngan::training::{
    denoiser_checkpoint, denoiser_from_checkpoint, finetune_denoiser, generator_from_checkpoint, train_gan, Gan,
    RunDir,
};
use pngan::{Error, Precision, Real, Result};
use serde_json::{json, Value};

use crate::Command;

pub fn run(cmd: Command, mut cfg: RunConfig) -> Result<Value> {
    let root = std::env::var_os("PNGAN_RUN_DIR")
        .map(PathBuf::from)
        .or_else(|| cfg.run_dir.clone())
        .unwrap_or_else(|| Path::new("runs").join(cmd.name()));
    cfg.run_dir = Some(root.clone());
    let run = RunDir::create(root)?;
    run.write_config(&cfg)?;
    match cfg.precision {
        Precision::F32 => dispatch::<f32>(cmd, &cfg, &run),
        Precision::F64 => dispatch::<f64>(cmd, &cfg, &run),
    }
}

fn dispatch<T: Real>(cmd: Command, cfg: &RunConfig, run: &RunDir) -> Result<Value> {
    match cmd {
        Command::ToyData => toy_data(cfg, run),
        Command::TrainDenoiser => train_denoiser::<T>(cfg, run),
        Command::TrainGan => train_adversarial::<T>(cfg, run),
        Command::Generate => generate::<T>(cfg, run),
        Command::Eval => eval::<T>(cfg, run),
        Command::Finetune => finetune::<T>(cfg, run),
        Command::Mix => mix(cfg, run),
    }
}

fn load<T: Real>(root: &Path, tag: SourceTag) -> Result<PairedDataset<T>> {
    Ok(load_dataset(root, tag)?.cast())
}

fn checkpoint(path: &Path) -> Result<Checkpoint> {
    if !path.is_file() {
        return Err(Error::MissingCheckpoint(path.to_path_buf()));
    }
    Checkpoint::load(path)
}

/// A checkpoint file, or the latest `ckpt/step-N` of a run directory.
fn gan_checkpoint(path: &Path) -> Result<Checkpoint> {
    if path.is_dir() {
        let ckpt = path.join("ckpt");
        if !ckpt.is_dir() {
            return Err(Error::MissingCheckpoint(ckpt));
        }
        let latest = RunDir::create(path)?.latest_checkpoint()?;
        return checkpoint(&latest.unwrap_or(ckpt));
    }
    checkpoint(path)
}

fn features<T: Real>(cfg: &RunConfig) -> Result<FeatureExtractor<T>> {
    Ok(match cfg.features.kind {
        FeatureKind::FixedRandomConv => FeatureExtractor::fixed_random(cfg.features.seed),
        FeatureKind::Identity => FeatureExtractor::Identity,
        FeatureKind::PretrainedImport => {
            let path = cfg.features.path.as_deref().expect("validated");
            FeatureExtractor::import(&checkpoint(path)?)?
        }
    })
}

fn toy_data(cfg: &RunConfig, run: &RunDir) -> Result<Value> {
    let t = &cfg.toy;
    let all = toy_real_dataset::<f32>(t.train_pairs + t.test_pairs, t.size, &t.camera, t.seed)?;
    let (train, test) = all.split_at(t.train_pairs);
    let meta = serde_json::to_value(t)?;
    let (train_dir, test_dir) = (run.root().join("train"), run.root().join("test"));
    save_dataset(&train, &train_dir, &meta)?;
    save_dataset(&test, &test_dir, &meta)?;
    Ok(json!({ "train": train_dir, "test": test_dir, "pairs": [train.len(), test.len()] }))
}

fn train_denoiser<T: Real>(cfg: &RunConfig, run: &RunDir) -> Result<Value> {
    let ds = load::<T>(&cfg.data.train, SourceTag::Real)?;
    let mut model = Denoiser::<T>::new(cfg.denoiser.clone())?;
    let mut log = Ok(());
    let curve = fit_denoiser(&mut model, &ds, &cfg.denoiser_train, |step, loss| {
        if log.is_ok() {
            log = run.append_log(&json!({ "step": step, "mae": loss }));
        }
    })?;
    log?;
    let path = run.root().join("denoiser.ckpt");
    denoiser_checkpoint(&model)?.save(&path)?;
    Ok(json!({ "checkpoint": path, "steps": curve.len(), "final_mae": curve.last() }))
}

fn train_adversarial<T: Real>(cfg: &RunConfig, run: &RunDir) -> Result<Value> {
    let mut gan = match run.latest_checkpoint()? {
        Some(path) => Gan::<T>::from_checkpoint(&Checkpoint::load(&path)?)?,
        None => {
            let denoiser = denoiser_from_checkpoint::<T>(&checkpoint(&cfg.checkpoints.denoiser)?)?;
            Gan::new(
                cfg.generator.clone(),
                cfg.discriminator.clone(),
                denoiser,
                features(cfg)?,
                &cfg.train,
            )?
        }
    };
    let start = gan.step();
    let ds = load::<T>(&cfg.data.train, SourceTag::Real)?;
    let records = train_gan(&mut gan, &ds, &cfg.noise, &cfg.train, Some(run))?;
    Ok(json!({
        "checkpoint": run.checkpoint_path(gan.step()),
        "resumed_from": start,
        "steps": gan.step(),
        "last": records.last(),
    }))
}

fn generate<T: Real>(cfg: &RunConfig, run: &RunDir) -> Result<Value> {
    let source = load::<T>(&cfg.data.source, SourceTag::Real)?;
    let seed = cfg.generate.seed;
    let ds = if cfg.generate.synthetic_only {
        synthetic_dataset(source.cleans(), &cfg.noise, seed)?
    } else {
        let generator = generator_from_checkpoint::<T>(&gan_checkpoint(&cfg.checkpoints.gan)?)?;
        generate_dataset(source.cleans(), &cfg.noise, &generator, seed)?
    };
    let out = run.root().join("generated");
    let meta = json!({ "source": cfg.data.source, "noise": cfg.noise, "generate": cfg.generate });
    save_dataset(&ds, &out, &meta)?;
    Ok(json!({ "dataset": out, "pairs": ds.len(), "tag": ds.tag() }))
}

fn eval<T: Real>(cfg: &RunConfig, run: &RunDir) -> Result<Value> {
    if !cfg.eval.domain && cfg.eval.denoiser.is_none() {
        return Err(Error::Config("eval needs eval.domain or eval.denoiser".into()));
    }
    let test = load::<T>(&cfg.data.test, SourceTag::Real)?;
    let mut report = json!({ "test": cfg.data.test, "pairs": test.len() });
    if cfg.eval.domain {
        let generated = load::<T>(&cfg.data.generated, SourceTag::Generated)?;
        let baseline = synthetic_dataset(test.cleans(), &cfg.noise, cfg.eval.report.seed)?;
        report["domain"] = serde_json::to_value(domain_report(&generated, &test, &baseline, &cfg.eval.report)?)?;
    }
    if let Some(path) = &cfg.eval.denoiser {
        let d = denoiser_from_checkpoint::<T>(&checkpoint(path)?)?;
        let (psnr, ssim) = quality(&test, |x| d.denoise(x))?;
        let (psnr_in, ssim_in) = quality(&test, |x| Ok(x.clone()))?;
        report["denoiser"] = json!({
            "checkpoint": path,
            "psnr": psnr,
            "ssim": ssim,
            "noisy_psnr": psnr_in,
            "noisy_ssim": ssim_in,
        });
    }
    std::fs::write(run.root().join("report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

fn mixed<T: Real>(cfg: &RunConfig) -> Result<PairedDataset<T>> {
    let real = load::<T>(&cfg.data.train, SourceTag::Real)?;
    let generated = load::<T>(&cfg.data.generated, SourceTag::Generated)?;
    mix_datasets(&real, &generated, &cfg.mix)
}

fn mix(cfg: &RunConfig, run: &RunDir) -> Result<Value> {
    let mut ds = PairedDataset::<f32>::new();
    let m = mixed::<f32>(cfg)?;
    for ((pair, name), tag) in m.pairs().iter().zip(m.names()).zip(m.tags()) {
        ds.push(format!("{}-{name}", json!(tag).as_str().unwrap_or("pair")), pair.0.clone(), pair.1.clone(), *tag)?;
    }
    let out = run.root().join("mixed");
    save_dataset(&ds, &out, &json!({ "train": cfg.data.train, "generated": cfg.data.generated, "mix": cfg.mix }))?;
    let generated = ds.tags().iter().filter(|t| **t == SourceTag::Generated).count();
    Ok(json!({ "dataset": out, "pairs": ds.len(), "generated": generated }))
}

fn finetune<T: Real>(cfg: &RunConfig, run: &RunDir) -> Result<Value> {
    let base = denoiser_from_checkpoint::<T>(&checkpoint(&cfg.checkpoints.denoiser)?)?;
    let ds = mixed::<T>(cfg)?;
    let (tuned, curve) = finetune_denoiser(&base, &ds, &cfg.finetune)?;
    for (step, mae) in curve.iter().enumerate() {
        run.append_log(&json!({ "step": step, "mae": mae }))?;
    }
    let path = run.root().join("denoiser.ckpt");
    denoiser_checkpoint(&tuned)?.save(&path)?;
    Ok(json!({ "checkpoint": path, "pairs": ds.len(), "steps": curve.len(), "final_mae": curve.last() }))
}
