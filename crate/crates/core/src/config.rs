//! The full run configuration: one JSON tree covering every component, with
//! `section.key=value` overrides layered on top of a file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::denoiser::{DenoiserConfig, DenoiserTrainConfig};
use crate::discriminator::DiscriminatorConfig;
use crate::error::{Error, Result};
use crate::evaluation::ReportConfig;
use crate::generator::GeneratorConfig;
use crate::imaging::MixSpec;
use crate::losses::FeatureKind;
use crate::noise::{SynthNoise, ToyCameraConfig};
use crate::real::Precision;
use crate::training::{default_finetune_config, TrainConfig};

/// Dataset roots in the `clean/` + `noisy/` layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    /// Real pairs used to train the denoiser and the GAN.
    pub train: PathBuf,
    /// Held-out real pairs for evaluation.
    pub test: PathBuf,
    /// Pairs written by `generate`.
    pub generated: PathBuf,
    /// Clean images fed to `generate`; only `clean/` is read.
    pub source: PathBuf,
}

impl Default for DataPaths {
    fn default() -> Self {
        Self {
            train: "data/train".into(),
            test: "data/test".into(),
            generated: "data/generated".into(),
            source: "data/test".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckpointPaths {
    /// Frozen denoiser for GAN training, and the base for finetuning.
    pub denoiser: PathBuf,
    /// A GAN checkpoint file, or a run directory whose latest checkpoint is used.
    pub gan: PathBuf,
}

impl Default for CheckpointPaths {
    fn default() -> Self {
        Self {
            denoiser: "runs/train-denoiser/denoiser.ckpt".into(),
            gan: "runs/train-gan".into(),
        }
    }
}

/// Parameters of the toy "real" dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyDataConfig {
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub size: usize,
    pub seed: u64,
    pub camera: ToyCameraConfig,
}

impl Default for ToyDataConfig {
    fn default() -> Self {
        Self {
            train_pairs: 450,
            test_pairs: 50,
            size: 64,
            seed: 0,
            camera: ToyCameraConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub seed: u64,
    /// Checkpoint holding `features/conv<i>.*` arrays for `pretrained_import`.
    pub path: Option<PathBuf>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kind: FeatureKind::FixedRandomConv,
            seed: 0,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub seed: u64,
    /// Write the synthetic inputs instead of generator outputs (the AWGN
    /// baseline); no GAN checkpoint is needed.
    pub synthetic_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub report: ReportConfig,
    /// Compare `data.generated` against `data.test`.
    pub domain: bool,
    /// Denoiser checkpoint scored by PSNR/SSIM on `data.test`.
    pub denoiser: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            report: ReportConfig::default(),
            domain: true,
            denoiser: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub precision: Precision,
    /// Output directory. `PNGAN_RUN_DIR` wins over this; without either each
    /// command writes to `runs/<command>`.
    pub run_dir: Option<PathBuf>,
    pub data: DataPaths,
    pub checkpoints: CheckpointPaths,
    pub toy: ToyDataConfig,
    pub noise: SynthNoise,
    pub features: FeatureConfig,
    pub denoiser: DenoiserConfig,
    pub denoiser_train: DenoiserTrainConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
    pub generate: GenerateConfig,
    pub mix: MixSpec,
    pub finetune: DenoiserTrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            precision: Precision::F32,
            run_dir: None,
            data: DataPaths::default(),
            checkpoints: CheckpointPaths::default(),
            toy: ToyDataConfig::default(),
            noise: SynthNoise::default(),
            features: FeatureConfig::default(),
            denoiser: DenoiserConfig::default(),
            denoiser_train: DenoiserTrainConfig::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            train: TrainConfig::default(),
            generate: GenerateConfig::default(),
            mix: MixSpec { q: 0.6, seed: 0 },
            finetune: default_finetune_config(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, then `file` (if any), then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut tree = serde_json::to_value(Self::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let patch: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            merge(&mut tree, patch);
        }
        for (key, value) in overrides {
            set_key(&mut tree, key, value)?;
        }
        let cfg: Self = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.toy.camera.validate()?;
        self.noise.validate()?;
        self.denoiser.validate()?;
        self.denoiser_train.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()?;
        self.train.validate()?;
        self.finetune.validate()?;
        self.mix.generated_count(0)?;
        if self.toy.size == 0 || self.toy.train_pairs == 0 {
            return Err(Error::Config("toy data needs size >= 1 and train_pairs >= 1".into()));
        }
        if self.eval.report.patch == 0 {
            return Err(Error::Config("eval.report.patch must be >= 1".into()));
        }
        if self.features.kind == FeatureKind::PretrainedImport && self.features.path.is_none() {
            return Err(Error::Config("features.kind = pretrained_import needs features.path".into()));
        }
        Ok(())
    }

    /// Whether `key`'s first dotted segment names a top-level section.
    pub fn is_key(key: &str) -> bool {
        let head = key.split('.').next().unwrap_or_default();
        match serde_json::to_value(Self::default()) {
            Ok(Value::Object(m)) => m.contains_key(head),
            _ => false,
        }
    }
}

/// Recursive object merge; non-object values replace.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Sets a dotted key. The value is read as JSON when it parses, except
/// where the current value is a string; otherwise it is taken verbatim.
fn set_key(tree: &mut Value, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key `{key}`")));
    }
    let mut node = tree;
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{}` is not a section", parts[..i].join("."))))?;
        let last = i + 1 == parts.len();
        if !obj.contains_key(*part) {
            if i == 0 || !last {
                return Err(Error::Config(format!("unknown key `{key}`")));
            }
            obj.insert(part.to_string(), Value::Null);
        }
        node = obj.get_mut(*part).expect("just checked");
    }
    let parsed = serde_json::from_str::<Value>(raw).ok();
    *node = match (&*node, parsed) {
        (Value::String(_), Some(v @ Value::String(_))) => v,
        (Value::String(_), _) => Value::String(raw.to_string()),
        (_, Some(v)) => v,
        (_, None) => Value::String(raw.to_string()),
    };
    Ok(())
}
