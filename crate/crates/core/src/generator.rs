//! The multi-scale residual generator.
//!
//! ```text
//! I_fn = I_syn + tail(SRG_t(… SRG_1(head(I_syn)) …))
//! SRG(x) = x + exit(MAB_n(… MAB_1(entry(x)) …))
//! MAB(x) = x + fusion([FCA(x), up2(FCA(down2(x))), up4(FCA(down4(x)))])
//! ```
//!
//! `downK` is blur-pool downsampling, `upK` is bilinear upsampling back to
//! the input size followed by a 1×1 convolution. No normalization and no
//! pointwise activations appear anywhere; the only nonlinearity is the
//! channel-attention gate.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::imaging::{PairedDataset, SourceTag};
use crate::nn::{
    bilinear_resize, bilinear_resize_backward, blur_pool_down, blur_pool_down_backward, Conv2d,
    Fca, FcaCache, Module, Param,
};
use crate::nn_util::{extend_prefixed, extend_prefixed_mut};
use crate::noise::SynthNoise;
use crate::real::Real;
use crate::rng::{self, stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Number of residual groups (`t`).
    pub groups: usize,
    /// Attention blocks per group (`n`).
    pub blocks: usize,
    /// Feature channels (`C`).
    pub channels: usize,
    /// Length of the channel-attention 1-D kernel.
    pub fca_kernel: usize,
    /// Keep the ×2 and ×4 branches of every block.
    pub multiscale: bool,
    /// Blur-pool downsampling; plain bilinear downsampling when off.
    pub shift_invariant_down: bool,
    /// Channel attention; identity when off.
    pub fca: bool,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            groups: 3,
            blocks: 2,
            channels: 64,
            fca_kernel: 3,
            multiscale: true,
            shift_invariant_down: true,
            fca: true,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.blocks == 0 || self.channels == 0 {
            return Err(Error::Config("generator groups/blocks/channels must be >= 1".into()));
        }
        if self.fca && (self.fca_kernel.is_multiple_of(2) || self.fca_kernel > self.channels) {
            return Err(Error::Config(format!(
                "fca_kernel must be odd and <= channels ({}), got {}",
                self.channels, self.fca_kernel
            )));
        }
        Ok(())
    }

    /// Closed-form learnable-parameter count for this architecture.
    pub fn expected_param_count(&self) -> usize {
        let c = self.channels;
        let conv = |cin: usize, cout: usize, k: usize| cin * cout * k * k + cout;
        let fca = if self.fca { self.fca_kernel + 1 } else { 0 };
        let mab = if self.multiscale {
            3 * fca + 2 * conv(c, c, 1) + conv(3 * c, c, 3)
        } else {
            fca + conv(c, c, 3)
        };
        let srg = 2 * conv(c, c, 3) + self.blocks * mab;
        conv(3, c, 3) + conv(c, 3, 3) + self.groups * srg
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BlockOptions {
    multiscale: bool,
    sid: bool,
}

/// One downsampled branch: `conv1x1(up(FCA(down(x))))`.
#[derive(Debug, Clone, PartialEq)]
struct Branch<T> {
    factor: usize,
    fca: Option<Fca<T>>,
    up: Conv2d<T>,
}

struct BranchCache<T> {
    down: Tensor<T>,
    fca: Option<FcaCache<T>>,
    up_in: Tensor<T>,
}

impl<T: Real> Branch<T> {
    fn forward(&self, x: &Tensor<T>, sid: bool) -> Result<(Tensor<T>, BranchCache<T>)> {
        let (_, h, w) = x.dims();
        let down = if sid {
            blur_pool_down(x, self.factor)?
        } else {
            bilinear_resize(x, h / self.factor, w / self.factor)
        };
        let (att, fca) = match &self.fca {
            Some(f) => {
                let (y, c) = f.forward(&down)?;
                (y, Some(c))
            }
            None => (down.clone(), None),
        };
        let up_in = bilinear_resize(&att, h, w);
        let out = self.up.forward(&up_in)?;
        Ok((out, BranchCache { down, fca, up_in }))
    }

    fn backward(
        &mut self,
        cache: BranchCache<T>,
        dout: &Tensor<T>,
        sid: bool,
        h: usize,
        w: usize,
    ) -> Result<Tensor<T>> {
        let dup = self
            .up
            .backward(&cache.up_in, dout, true)
            .expect("input gradient");
        let datt = bilinear_resize_backward(&dup, cache.down.height(), cache.down.width());
        let ddown = match (&mut self.fca, &cache.fca) {
            (Some(f), Some(c)) => f.backward(&cache.down, c, &datt),
            _ => datt,
        };
        if sid {
            blur_pool_down_backward(&ddown, h, w, self.factor)
        } else {
            Ok(bilinear_resize_backward(&ddown, h, w))
        }
    }
}

/// Multi-scale attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct Mab<T> {
    fca: Option<Fca<T>>,
    branches: Vec<Branch<T>>,
    fusion: Conv2d<T>,
    opts: BlockOptions,
}

pub struct MabCache<T> {
    x: Tensor<T>,
    fca: Option<FcaCache<T>>,
    branches: Vec<BranchCache<T>>,
    cat: Tensor<T>,
}

impl<T: Real> Mab<T> {
    fn new<R: rand::Rng>(cfg: &GeneratorConfig, rng: &mut R) -> Self {
        let c = cfg.channels;
        let make_fca = || cfg.fca.then(|| Fca::zeros(cfg.fca_kernel));
        let branches = if cfg.multiscale {
            [2, 4]
                .into_iter()
                .map(|factor| Branch {
                    factor,
                    fca: make_fca(),
                    up: Conv2d::uniform(c, c, 1, 1, rng),
                })
                .collect()
        } else {
            Vec::new()
        };
        let width = c * (1 + branches.len());
        Self {
            fca: make_fca(),
            branches,
            fusion: Conv2d::uniform(width, c, 3, 1, rng),
            opts: BlockOptions {
                multiscale: cfg.multiscale,
                sid: cfg.shift_invariant_down,
            },
        }
    }

    pub fn channels(&self) -> usize {
        self.fusion.out_channels()
    }

    /// Fusion convolution (last layer of the block).
    pub fn fusion_mut(&mut self) -> &mut Conv2d<T> {
        &mut self.fusion
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels() != self.channels() {
            return Err(shape_err(format!(
                "attention block expects {} channels, got {}",
                self.channels(),
                x.channels()
            )));
        }
        if self.opts.multiscale && (!x.height().is_multiple_of(4) || !x.width().is_multiple_of(4)) {
            return Err(shape_err(format!(
                "spatial dims {}x{} not divisible by 4",
                x.height(),
                x.width()
            )));
        }
        Ok(())
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, MabCache<T>)> {
        self.check(x)?;
        let (b1, fca) = match &self.fca {
            Some(f) => {
                let (y, c) = f.forward(x)?;
                (y, Some(c))
            }
            None => (x.clone(), None),
        };
        let mut outs = vec![b1];
        let mut caches = Vec::with_capacity(self.branches.len());
        for br in &self.branches {
            let (y, c) = br.forward(x, self.opts.sid)?;
            outs.push(y);
            caches.push(c);
        }
        let refs: Vec<&Tensor<T>> = outs.iter().collect();
        let cat = Tensor::concat_channels(&refs)?;
        let mut out = self.fusion.forward(&cat)?;
        out.add_assign(x);
        Ok((
            out,
            MabCache {
                x: x.clone(),
                fca,
                branches: caches,
                cat,
            },
        ))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn backward(&mut self, cache: MabCache<T>, dout: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.channels();
        let (h, w) = (cache.x.height(), cache.x.width());
        let dcat = self
            .fusion
            .backward(&cache.cat, dout, true)
            .expect("input gradient");
        let parts = dcat.split_channels(&vec![c; 1 + self.branches.len()]);
        let mut dx = dout.clone();
        let d1 = match (&mut self.fca, &cache.fca) {
            (Some(f), Some(fc)) => f.backward(&cache.x, fc, &parts[0]),
            _ => parts[0].clone(),
        };
        dx.add_assign(&d1);
        let sid = self.opts.sid;
        for ((br, bc), dpart) in self
            .branches
            .iter_mut()
            .zip(cache.branches)
            .zip(&parts[1..])
        {
            dx.add_assign(&br.backward(bc, dpart, sid, h, w)?);
        }
        Ok(dx)
    }
}

impl<T: Real> Module<T> for Mab<T> {
    fn named_params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        if let Some(f) = &self.fca {
            extend_prefixed(&mut out, "fca1", f);
        }
        for br in &self.branches {
            if let Some(f) = &br.fca {
                extend_prefixed(&mut out, &format!("fca{}", br.factor), f);
            }
            extend_prefixed(&mut out, &format!("up{}", br.factor), &br.up);
        }
        extend_prefixed(&mut out, "fusion", &self.fusion);
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        if let Some(f) = &mut self.fca {
            extend_prefixed_mut(&mut out, "fca1", f);
        }
        for br in &mut self.branches {
            let factor = br.factor;
            if let Some(f) = &mut br.fca {
                extend_prefixed_mut(&mut out, &format!("fca{factor}"), f);
            }
            extend_prefixed_mut(&mut out, &format!("up{factor}"), &mut br.up);
        }
        extend_prefixed_mut(&mut out, "fusion", &mut self.fusion);
        out
    }
}

/// Simple residual group.
#[derive(Debug, Clone, PartialEq)]
pub struct Srg<T> {
    entry: Conv2d<T>,
    blocks: Vec<Mab<T>>,
    exit: Conv2d<T>,
}

pub struct SrgCache<T> {
    x: Tensor<T>,
    blocks: Vec<MabCache<T>>,
    exit_in: Tensor<T>,
}

impl<T: Real> Srg<T> {
    fn new<R: rand::Rng>(cfg: &GeneratorConfig, rng: &mut R) -> Self {
        let c = cfg.channels;
        let entry = Conv2d::uniform(c, c, 3, 1, rng);
        let blocks = (0..cfg.blocks).map(|_| Mab::new(cfg, rng)).collect();
        let exit = Conv2d::uniform(c, c, 3, 1, rng);
        Self {
            entry,
            blocks,
            exit,
        }
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, SrgCache<T>)> {
        let mut h = self.entry.forward(x)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = b.forward_cached(&h)?;
            caches.push(c);
            h = y;
        }
        let mut out = self.exit.forward(&h)?;
        out.add_assign(x);
        Ok((
            out,
            SrgCache {
                x: x.clone(),
                blocks: caches,
                exit_in: h,
            },
        ))
    }

    pub fn backward(&mut self, cache: SrgCache<T>, dout: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = self
            .exit
            .backward(&cache.exit_in, dout, true)
            .expect("input gradient");
        for (b, c) in self.blocks.iter_mut().zip(cache.blocks).rev() {
            g = b.backward(c, &g)?;
        }
        let mut dx = self
            .entry
            .backward(&cache.x, &g, true)
            .expect("input gradient");
        dx.add_assign(dout);
        Ok(dx)
    }

    pub fn blocks_mut(&mut self) -> &mut [Mab<T>] {
        &mut self.blocks
    }
}

impl<T: Real> Module<T> for Srg<T> {
    fn named_params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        extend_prefixed(&mut out, "entry", &self.entry);
        for (i, b) in self.blocks.iter().enumerate() {
            extend_prefixed(&mut out, &format!("mab{i}"), b);
        }
        extend_prefixed(&mut out, "exit", &self.exit);
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        extend_prefixed_mut(&mut out, "entry", &mut self.entry);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            extend_prefixed_mut(&mut out, &format!("mab{i}"), b);
        }
        extend_prefixed_mut(&mut out, "exit", &mut self.exit);
        out
    }
}

/// The full generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    config: GeneratorConfig,
    head: Conv2d<T>,
    groups: Vec<Srg<T>>,
    tail: Conv2d<T>,
}

pub struct GeneratorCache<T> {
    input: Tensor<T>,
    groups: Vec<SrgCache<T>>,
    head_out_dims: (usize, usize, usize),
    tail_in: Tensor<T>,
}

impl<T: Real> Generator<T> {
    /// Fan-in uniform spatial kernels, zero FCA kernels (gates start at
    /// 1.5) and a zero tail, so an untrained generator is the identity.
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::keyed(&[stream::INIT, config.seed]);
        let c = config.channels;
        let head = Conv2d::uniform(3, c, 3, 1, &mut rng);
        let groups = (0..config.groups)
            .map(|_| Srg::new(&config, &mut rng))
            .collect();
        let tail = Conv2d::zeros(c, 3, 3, 1);
        Ok(Self {
            config,
            head,
            groups,
            tail,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn tail_mut(&mut self) -> &mut Conv2d<T> {
        &mut self.tail
    }

    pub fn groups_mut(&mut self) -> &mut [Srg<T>] {
        &mut self.groups
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        if x.channels() != 3 {
            return Err(shape_err(format!("generator expects 3 channels, got {}", x.channels())));
        }
        if !x.height().is_multiple_of(4) || !x.width().is_multiple_of(4) || x.height() == 0 || x.width() == 0 {
            return Err(shape_err(format!(
                "generator input {}x{} not divisible by 4",
                x.height(),
                x.width()
            )));
        }
        Ok(())
    }

    pub fn forward_cached(&self, i_syn: &Tensor<T>) -> Result<(Tensor<T>, GeneratorCache<T>)> {
        self.check(i_syn)?;
        let mut h = self.head.forward(i_syn)?;
        let head_out_dims = h.dims();
        let mut caches = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let (y, c) = g.forward_cached(&h)?;
            caches.push(c);
            h = y;
        }
        let mut out = self.tail.forward(&h)?;
        out.add_assign(i_syn);
        Ok((
            out,
            GeneratorCache {
                input: i_syn.clone(),
                groups: caches,
                head_out_dims,
                tail_in: h,
            },
        ))
    }

    /// `I_fn` (unclipped).
    pub fn forward(&self, i_syn: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(i_syn)?;
        let mut h = self.head.forward(i_syn)?;
        for g in &self.groups {
            h = g.forward_cached(&h)?.0;
        }
        let mut out = self.tail.forward(&h)?;
        out.add_assign(i_syn);
        Ok(out)
    }

    /// Accumulates parameter gradients; returns `dL/dI_syn`.
    pub fn backward(&mut self, cache: GeneratorCache<T>, dout: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = self
            .tail
            .backward(&cache.tail_in, dout, true)
            .expect("input gradient");
        for (grp, c) in self.groups.iter_mut().zip(cache.groups).rev() {
            g = grp.backward(c, &g)?;
        }
        debug_assert_eq!(g.dims(), cache.head_out_dims);
        let mut dx = self
            .head
            .backward(&cache.input, &g, true)
            .expect("input gradient");
        dx.add_assign(dout);
        Ok(dx)
    }
}

impl<T: Real> Module<T> for Generator<T> {
    fn named_params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        extend_prefixed(&mut out, "head", &self.head);
        for (i, g) in self.groups.iter().enumerate() {
            extend_prefixed(&mut out, &format!("srg{i}"), g);
        }
        extend_prefixed(&mut out, "tail", &self.tail);
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        extend_prefixed_mut(&mut out, "head", &mut self.head);
        for (i, g) in self.groups.iter_mut().enumerate() {
            extend_prefixed_mut(&mut out, &format!("srg{i}"), g);
        }
        extend_prefixed_mut(&mut out, "tail", &mut self.tail);
        out
    }
}

/// Pairs `(clean, clip(G(I_syn)))` where `I_syn` is `noise` applied to each
/// clean image under key `[seed, i]`.
pub fn generate_dataset<'a, T: Real>(
    cleans: impl IntoIterator<Item = &'a Tensor<T>>,
    noise: &SynthNoise,
    generator: &Generator<T>,
    seed: u64,
) -> Result<PairedDataset<T>> {
    noise.validate()?;
    let mut ds = PairedDataset::new();
    for (i, clean) in cleans.into_iter().enumerate() {
        let i_syn = noise.apply(clean, &[seed, i as u64]);
        let i_fn = generator.forward(&i_syn)?.clip01();
        ds.push(format!("{i:04}"), clean.clone(), i_fn, SourceTag::Generated)?;
    }
    Ok(ds)
}
