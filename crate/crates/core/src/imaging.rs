//! Datasets of clean/noisy pairs: PNG I/O, patch cropping, flips, mixing.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Rgb};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::{self, stream};
use crate::tensor::{ImageTensor, Tensor};

/// `(clean, noisy)`.
pub type Pair<T> = (Tensor<T>, Tensor<T>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Real,
    Generated,
    Synthetic,
}

/// Named clean/noisy pairs, each carrying the tag of the dataset it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset<T = f32> {
    pairs: Vec<Pair<T>>,
    names: Vec<String>,
    tags: Vec<SourceTag>,
}

impl<T: Real> Default for PairedDataset<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> PairedDataset<T> {
    pub fn new() -> Self {
        Self {
            pairs: Vec::new(),
            names: Vec::new(),
            tags: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, clean: Tensor<T>, noisy: Tensor<T>, tag: SourceTag) -> Result<()> {
        let name = name.into();
        if !clean.same_dims(&noisy) {
            return Err(Error::PairDimensions {
                name,
                clean: clean.dims(),
                noisy: noisy.dims(),
            });
        }
        self.pairs.push((clean, noisy));
        self.names.push(name);
        self.tags.push(tag);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Pair<T>] {
        &self.pairs
    }

    pub fn get(&self, i: usize) -> &Pair<T> {
        &self.pairs[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tags(&self) -> &[SourceTag] {
        &self.tags
    }

    /// The common tag, or `None` for an empty or mixed dataset.
    pub fn tag(&self) -> Option<SourceTag> {
        let first = *self.tags.first()?;
        self.tags.iter().all(|&t| t == first).then_some(first)
    }

    pub fn cleans(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.pairs.iter().map(|p| &p.0)
    }

    pub fn cast<U: Real>(&self) -> PairedDataset<U> {
        PairedDataset {
            pairs: self.pairs.iter().map(|(c, n)| (c.cast(), n.cast())).collect(),
            names: self.names.clone(),
            tags: self.tags.clone(),
        }
    }

    /// Sub-dataset with the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            pairs: indices.iter().map(|&i| self.pairs[i].clone()).collect(),
            names: indices.iter().map(|&i| self.names[i].clone()).collect(),
            tags: indices.iter().map(|&i| self.tags[i]).collect(),
        }
    }

    /// First `n` pairs and the rest.
    pub fn split_at(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.select(&head), self.select(&tail))
    }
}

/// Reads an 8- or 16-bit PNG into `[0,1]` RGB.
pub fn read_png(path: &Path) -> Result<ImageTensor> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match &img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => img
            .to_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / 65535.0)
            .collect(),
        _ => img
            .to_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / 255.0)
            .collect(),
    };
    Ok(Tensor::from_fn(3, h, w, |c, y, x| data[(y * w + x) * 3 + c]))
}

/// Writes a 16-bit RGB PNG; values are clipped to `[0,1]`.
pub fn write_png16<T: Real>(path: &Path, img: &Tensor<T>) -> Result<()> {
    let (c, h, w) = img.dims();
    if c != 3 {
        return Err(Error::Shape(format!("PNG output needs 3 channels, got {c}")));
    }
    let mut raw = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                let v = img.get(ch, y, x).as_f64().clamp(0.0, 1.0);
                raw.push((v * 65535.0).round() as u16);
            }
        }
    }
    let buf: ImageBuffer<Rgb<u16>, _> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer size");
    buf.save(path)?;
    Ok(())
}

fn png_names(dir: &Path) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    if !dir.exists() {
        return Ok(out);
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string());
            }
        }
    }
    Ok(out)
}

/// Loads `<root>/clean/<name>.png` + `<root>/noisy/<name>.png` pairs in
/// lexicographic name order.
pub fn load_dataset(root: &Path, tag: SourceTag) -> Result<PairedDataset<f32>> {
    if !root.is_dir() {
        return Err(Error::InvalidArgument(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    let clean_dir = root.join("clean");
    let noisy_dir = root.join("noisy");
    let clean = png_names(&clean_dir)?;
    let noisy = png_names(&noisy_dir)?;
    if let Some(orphan) = clean.symmetric_difference(&noisy).next() {
        let path: PathBuf = if clean.contains(orphan) {
            clean_dir.join(format!("{orphan}.png"))
        } else {
            noisy_dir.join(format!("{orphan}.png"))
        };
        return Err(Error::OrphanFile(path));
    }
    let mut ds = PairedDataset::new();
    for name in clean {
        let c = read_png(&clean_dir.join(format!("{name}.png")))?;
        let n = read_png(&noisy_dir.join(format!("{name}.png")))?;
        ds.push(name, c, n, tag)?;
    }
    Ok(ds)
}

/// Writes the dataset in the loader's layout plus a `metadata.json` sidecar.
pub fn save_dataset<T: Real>(ds: &PairedDataset<T>, root: &Path, metadata: &serde_json::Value) -> Result<()> {
    let clean_dir = root.join("clean");
    let noisy_dir = root.join("noisy");
    std::fs::create_dir_all(&clean_dir)?;
    std::fs::create_dir_all(&noisy_dir)?;
    for ((c, n), name) in ds.pairs().iter().zip(ds.names()) {
        write_png16(&clean_dir.join(format!("{name}.png")), c)?;
        write_png16(&noisy_dir.join(format!("{name}.png")), n)?;
    }
    let meta = serde_json::json!({
        "pairs": ds.len(),
        "tag": ds.tag(),
        "source": metadata,
    });
    std::fs::write(root.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

fn check_patch(h: usize, w: usize, size: usize) -> Result<()> {
    if size == 0 || !size.is_multiple_of(4) {
        return Err(Error::InvalidArgument(format!(
            "patch size {size} must be a positive multiple of 4"
        )));
    }
    if size > h || size > w {
        return Err(Error::InvalidArgument(format!(
            "patch size {size} exceeds image {h}x{w}"
        )));
    }
    Ok(())
}

fn crop_pair<T: Real>(pair: &Pair<T>, y: usize, x: usize, size: usize) -> Result<Pair<T>> {
    Ok((pair.0.crop(y, x, size, size)?, pair.1.crop(y, x, size, size)?))
}

/// `count` aligned square patches from the pair at `pair_index`; offsets
/// are uniform and keyed by `(seed, pair_index, patch index)`.
pub fn crop_patches_indexed<T: Real>(
    pair: &Pair<T>,
    size: usize,
    count: usize,
    seed: u64,
    pair_index: usize,
) -> Result<Vec<Pair<T>>> {
    let (_, h, w) = pair.0.dims();
    check_patch(h, w, size)?;
    (0..count)
        .map(|k| {
            let mut r = rng::keyed(&[stream::CROP, seed, pair_index as u64, k as u64]);
            let y = r.gen_range(0..=h - size);
            let x = r.gen_range(0..=w - size);
            crop_pair(pair, y, x, size)
        })
        .collect()
}

pub fn crop_patches<T: Real>(pair: &Pair<T>, size: usize, count: usize, seed: u64) -> Result<Vec<Pair<T>>> {
    crop_patches_indexed(pair, size, count, seed, 0)
}

/// Applies the same flips to both members.
pub fn augment_flip<T: Real>(pair: &Pair<T>, horizontal: bool, vertical: bool) -> Pair<T> {
    let flip = |t: &Tensor<T>| {
        let t = if horizontal { t.flip_horizontal() } else { t.clone() };
        if vertical {
            t.flip_vertical()
        } else {
            t
        }
    };
    (flip(&pair.0), flip(&pair.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixSpec {
    /// Generated pairs per real pair.
    pub q: f64,
    #[serde(default)]
    pub seed: u64,
}

impl MixSpec {
    /// `⌈q·n⌉`, guarding against float noise such as `0.6·100 = 60.000000000000007`.
    pub fn generated_count(&self, n_real: usize) -> Result<usize> {
        if !(self.q >= 0.0) || !self.q.is_finite() {
            return Err(Error::InvalidArgument(format!("mixing ratio q = {} must be >= 0", self.q)));
        }
        let exact = self.q * n_real as f64;
        let rounded = exact.round();
        Ok(if (exact - rounded).abs() < 1e-9 * (1.0 + exact) {
            rounded as usize
        } else {
            exact.ceil() as usize
        })
    }
}

/// All real pairs followed by `⌈q·|real|⌉` generated pairs drawn without
/// replacement.
pub fn mix_datasets<T: Real>(
    real: &PairedDataset<T>,
    generated: &PairedDataset<T>,
    spec: &MixSpec,
) -> Result<PairedDataset<T>> {
    let k = spec.generated_count(real.len())?;
    if k > generated.len() {
        return Err(Error::InsufficientGenerated {
            required: k,
            available: generated.len(),
        });
    }
    let mut r = rng::keyed(&[stream::MIX, spec.seed]);
    let mut picked = index::sample(&mut r, generated.len(), k).into_vec();
    picked.sort_unstable();
    let mut out = real.clone();
    let extra = generated.select(&picked);
    out.pairs.extend(extra.pairs);
    out.names.extend(extra.names);
    out.tags.extend(extra.tags);
    Ok(out)
}

/// One training batch: pairs drawn with replacement, a random aligned
/// patch from each, random flips. Keyed by `(seed, step, slot)`.
pub fn sample_batch<T: Real>(
    ds: &PairedDataset<T>,
    batch: usize,
    patch: usize,
    seed: u64,
    step: u64,
) -> Result<Vec<Pair<T>>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    (0..batch)
        .map(|b| {
            let mut r = rng::keyed(&[stream::BATCH, seed, step, b as u64]);
            let pair = ds.get(r.gen_range(0..ds.len()));
            let (_, h, w) = pair.0.dims();
            check_patch(h, w, patch)?;
            let y = r.gen_range(0..=h - patch);
            let x = r.gen_range(0..=w - patch);
            let cropped = crop_pair(pair, y, x, patch)?;
            Ok(augment_flip(&cropped, r.gen(), r.gen()))
        })
        .collect()
}
