//! Encoders, decoder and discriminator of the adversarial autoencoder.
//!
//! Both encoders share one architecture: a stack of blocks
//! `conv -> rectifier -> batch norm -> (2,1) max pool`, where kernels slide
//! along time only and the last block has no pool. The flattened output of
//! the last block is the latent code. The decoder mirrors the encoder block
//! for block in reverse order: it undoes each pool with nearest-neighbour
//! upsampling to the exact pre-pool length and each convolution with a
//! transposed convolution of the same kernel length, so any window length
//! that survives the encoder round-trips to its own shape.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::SignalWindow;
use crate::error::{Error, Result};
use crate::nn::{
    join, relu_backward, relu_inplace, softmax, BatchNorm, BnCache, BnMode, Conv, ConvTranspose, FeatureMap,
    Linear, MaxPool, Module, Param, PoolCache, Upsample,
};

/// One encoder block: `kernels` filters of length `kernel` along time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub kernels: usize,
    pub kernel: usize,
    pub pool: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub blocks: Vec<BlockSpec>,
}

impl Architecture {
    /// 50/40/20 filters with kernel lengths 5/5/2; pools after the first two.
    pub fn standard() -> Self {
        Architecture {
            blocks: vec![
                BlockSpec { kernels: 50, kernel: 5, pool: true },
                BlockSpec { kernels: 40, kernel: 5, pool: true },
                BlockSpec { kernels: 20, kernel: 2, pool: false },
            ],
        }
    }

    /// Small variant for gradient checks on length-8 windows.
    pub fn toy() -> Self {
        Architecture {
            blocks: vec![
                BlockSpec { kernels: 4, kernel: 3, pool: true },
                BlockSpec { kernels: 3, kernel: 2, pool: true },
                BlockSpec { kernels: 2, kernel: 1, pool: false },
            ],
        }
    }

    /// Time length after each stage: `(after_conv, after_block)` per block.
    pub fn time_profile(&self, window_len: usize) -> Result<Vec<(usize, usize)>> {
        if self.blocks.is_empty() {
            return Err(Error::Config("architecture has no blocks".into()));
        }
        let mut t = window_len;
        let mut out = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            if b.kernel == 0 || b.kernels == 0 {
                return Err(Error::Config(format!("conv block {} has an empty kernel", i + 1)));
            }
            if t < b.kernel {
                return Err(Error::Config(format!(
                    "window length {window_len} too short: conv block {} receives {t} steps but its kernel spans {}",
                    i + 1,
                    b.kernel
                )));
            }
            let conv = t - b.kernel + 1;
            let after = if b.pool {
                if conv < 2 {
                    return Err(Error::Config(format!(
                        "window length {window_len} too short: max pool of conv block {} receives {conv} step",
                        i + 1
                    )));
                }
                MaxPool::output_len(conv)
            } else {
                conv
            };
            out.push((conv, after));
            t = after;
        }
        Ok(out)
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub window_len: usize,
    pub channels: usize,
    pub classes: usize,
    pub latent_dim: usize,
    pub architecture: Architecture,
}

impl ModelMeta {
    pub fn new(window_len: usize, channels: usize, classes: usize, architecture: Architecture) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Config("model needs at least one channel".into()));
        }
        if classes < 2 {
            return Err(Error::Config(format!("model needs at least 2 classes, got {classes}")));
        }
        let profile = architecture.time_profile(window_len)?;
        let last_time = profile.last().map(|p| p.1).unwrap_or(window_len);
        let last_planes = architecture.blocks.last().map(|b| b.kernels).unwrap_or(1);
        Ok(ModelMeta {
            window_len,
            channels,
            classes,
            latent_dim: last_planes * last_time * channels,
            architecture,
        })
    }

    fn latent_geometry(&self) -> (usize, usize) {
        let profile = self.architecture.time_profile(self.window_len).expect("validated");
        (self.architecture.blocks.last().unwrap().kernels, profile.last().unwrap().1)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct EncoderBlock {
    conv: Conv,
    bn: BatchNorm,
    pool: bool,
}

/// Convolutional encoder mapping a `(T, Ch)` window to a flat latent code.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    blocks: Vec<EncoderBlock>,
}

#[derive(Debug, Clone)]
struct EncoderBlockCache {
    input: FeatureMap,
    activated: FeatureMap,
    bn: BnCache,
    pool: Option<PoolCache>,
}

/// Everything an encoder backward pass needs.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    blocks: Vec<EncoderBlockCache>,
    out_shape: (usize, usize, usize),
}

impl Encoder {
    fn new(arch: &Architecture, rng: &mut ChaCha8Rng) -> Self {
        let mut in_planes = 1;
        let blocks = arch
            .blocks
            .iter()
            .map(|b| {
                let block = EncoderBlock {
                    conv: Conv::new(in_planes, b.kernels, b.kernel, std::f64::consts::SQRT_2, rng),
                    bn: BatchNorm::new(b.kernels),
                    pool: b.pool,
                };
                in_planes = b.kernels;
                block
            })
            .collect();
        Encoder { blocks }
    }

    /// Forward pass with batch statistics.
    pub fn forward_train(&self, x: &FeatureMap) -> (FeatureMap, EncoderCache) {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let mut a = block.conv.forward(&h);
            relu_inplace(&mut a.data);
            let (n, bn) = block.bn.forward_batch(&a);
            let (out, pool) = if block.pool {
                let (p, c) = MaxPool.forward(&n);
                (p, Some(c))
            } else {
                (n, None)
            };
            caches.push(EncoderBlockCache {
                input: h,
                activated: a,
                bn,
                pool,
            });
            h = out;
        }
        let out_shape = (h.planes, h.time, h.width);
        (
            h,
            EncoderCache {
                blocks: caches,
                out_shape,
            },
        )
    }

    pub fn forward_eval(&self, x: &FeatureMap) -> FeatureMap {
        let mut h = x.clone();
        for block in &self.blocks {
            let mut a = block.conv.forward(&h);
            relu_inplace(&mut a.data);
            let n = block.bn.forward_eval(&a);
            h = if block.pool { MaxPool.forward(&n).0 } else { n };
        }
        h
    }

    pub fn forward(&mut self, x: &FeatureMap, mode: BnMode) -> (FeatureMap, Option<EncoderCache>) {
        match mode {
            BnMode::Eval => (self.forward_eval(x), None),
            BnMode::Frozen => {
                let (h, c) = self.forward_train(x);
                (h, Some(c))
            }
            BnMode::Train => {
                let (h, c) = self.forward_train(x);
                self.track(&c);
                (h, Some(c))
            }
        }
    }

    /// Folds the batch statistics of a training pass into running averages.
    pub fn track(&mut self, cache: &EncoderCache) {
        for (block, c) in self.blocks.iter_mut().zip(&cache.blocks) {
            block.bn.track(&c.bn);
        }
    }

    /// Accumulates parameter gradients from the gradient w.r.t. the flat
    /// latent output (`[batch][latent_dim]`).
    pub fn backward(&mut self, cache: &EncoderCache, d_latent: &[f64]) {
        let (planes, time, width) = cache.out_shape;
        let batch = d_latent.len() / (planes * time * width);
        let mut g = FeatureMap::from_vec(batch, planes, time, width, d_latent.to_vec());
        for (block, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            if let Some(pc) = &c.pool {
                g = MaxPool.backward(pc, &g);
            }
            g = block.bn.backward(&c.bn, &g);
            relu_backward(&c.activated.data, &mut g.data);
            g = block.conv.backward(&c.input, &g);
        }
    }
}

impl Module for Encoder {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.blocks
            .iter_mut()
            .flat_map(|b| {
                let mut v = b.conv.params_mut();
                v.extend(b.bn.params_mut());
                v
            })
            .collect()
    }

    fn params(&self) -> Vec<&Param> {
        self.blocks
            .iter()
            .flat_map(|b| {
                let mut v = b.conv.params();
                v.extend(b.bn.params());
                v
            })
            .collect()
    }

    fn visit_tensors(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64])) {
        for (i, b) in self.blocks.iter().enumerate() {
            let p = join(prefix, &format!("block{}", i + 1));
            b.conv.visit_tensors(&join(&p, "conv"), f);
            b.bn.visit_tensors(&join(&p, "bn"), f);
        }
    }

    fn visit_tensors_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Vec<f64>)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = join(prefix, &format!("block{}", i + 1));
            b.conv.visit_tensors_mut(&join(&p, "conv"), f);
            b.bn.visit_tensors_mut(&join(&p, "bn"), f);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct DecoderBlock {
    upsample: Option<Upsample>,
    deconv: ConvTranspose,
    /// `None` on the output block, which stays linear.
    bn: Option<BatchNorm>,
}

/// Transposed-convolution decoder mirroring an [`Encoder`].
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    blocks: Vec<DecoderBlock>,
    latent_planes: usize,
    latent_time: usize,
}

#[derive(Debug, Clone)]
struct DecoderBlockCache {
    input_time: usize,
    expanded: FeatureMap,
    activated: Option<FeatureMap>,
    bn: Option<BnCache>,
}

#[derive(Debug, Clone)]
pub struct DecoderCache {
    blocks: Vec<DecoderBlockCache>,
}

impl Decoder {
    fn new(meta: &ModelMeta, rng: &mut ChaCha8Rng) -> Self {
        let arch = &meta.architecture;
        let profile = arch.time_profile(meta.window_len).expect("validated");
        let n = arch.blocks.len();
        let mut blocks = Vec::with_capacity(n);
        for i in (0..n).rev() {
            let spec = arch.blocks[i];
            let out_planes = if i == 0 { 1 } else { arch.blocks[i - 1].kernels };
            let last = i == 0;
            blocks.push(DecoderBlock {
                upsample: spec.pool.then_some(Upsample { target: profile[i].0 }),
                deconv: ConvTranspose::new(
                    spec.kernels,
                    out_planes,
                    spec.kernel,
                    if last { 1.0 } else { std::f64::consts::SQRT_2 },
                    rng,
                ),
                bn: (!last).then(|| BatchNorm::new(out_planes)),
            });
        }
        let (latent_planes, latent_time) = meta.latent_geometry();
        Decoder {
            blocks,
            latent_planes,
            latent_time,
        }
    }

    fn latent_map(&self, z: &[f64], width: usize) -> FeatureMap {
        let per = self.latent_planes * self.latent_time * width;
        FeatureMap::from_vec(z.len() / per, self.latent_planes, self.latent_time, width, z.to_vec())
    }

    pub fn forward_train(&self, z: &[f64], width: usize) -> (FeatureMap, DecoderCache) {
        let mut h = self.latent_map(z, width);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let input_time = h.time;
            let expanded = match &block.upsample {
                Some(u) => u.forward(&h),
                None => h,
            };
            let mut a = block.deconv.forward(&expanded);
            match &block.bn {
                Some(bn) => {
                    relu_inplace(&mut a.data);
                    let (n, c) = bn.forward_batch(&a);
                    caches.push(DecoderBlockCache {
                        input_time,
                        expanded,
                        activated: Some(a),
                        bn: Some(c),
                    });
                    h = n;
                }
                None => {
                    caches.push(DecoderBlockCache {
                        input_time,
                        expanded,
                        activated: None,
                        bn: None,
                    });
                    h = a;
                }
            }
        }
        (h, DecoderCache { blocks: caches })
    }

    pub fn forward_eval(&self, z: &[f64], width: usize) -> FeatureMap {
        let mut h = self.latent_map(z, width);
        for block in &self.blocks {
            if let Some(u) = &block.upsample {
                h = u.forward(&h);
            }
            let mut a = block.deconv.forward(&h);
            h = match &block.bn {
                Some(bn) => {
                    relu_inplace(&mut a.data);
                    bn.forward_eval(&a)
                }
                None => a,
            };
        }
        h
    }

    pub fn track(&mut self, cache: &DecoderCache) {
        for (block, c) in self.blocks.iter_mut().zip(&cache.blocks) {
            if let (Some(bn), Some(bc)) = (block.bn.as_mut(), c.bn.as_ref()) {
                bn.track(bc);
            }
        }
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the
    /// flat latent input.
    pub fn backward(&mut self, cache: &DecoderCache, d_out: &FeatureMap) -> Vec<f64> {
        let mut g = d_out.clone();
        for (block, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            if let (Some(bn), Some(bc), Some(a)) = (block.bn.as_mut(), c.bn.as_ref(), c.activated.as_ref()) {
                g = bn.backward(bc, &g);
                relu_backward(&a.data, &mut g.data);
            }
            g = block.deconv.backward(&c.expanded, &g);
            if let Some(u) = &block.upsample {
                g = u.backward(c.input_time, &g);
            }
        }
        g.data
    }
}

impl Module for Decoder {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.blocks
            .iter_mut()
            .flat_map(|b| {
                let mut v = b.deconv.params_mut();
                if let Some(bn) = b.bn.as_mut() {
                    v.extend(bn.params_mut());
                }
                v
            })
            .collect()
    }

    fn params(&self) -> Vec<&Param> {
        self.blocks
            .iter()
            .flat_map(|b| {
                let mut v = b.deconv.params();
                if let Some(bn) = b.bn.as_ref() {
                    v.extend(bn.params());
                }
                v
            })
            .collect()
    }

    fn visit_tensors(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64])) {
        for (i, b) in self.blocks.iter().enumerate() {
            let p = join(prefix, &format!("block{}", i + 1));
            b.deconv.visit_tensors(&join(&p, "deconv"), f);
            if let Some(bn) = &b.bn {
                bn.visit_tensors(&join(&p, "bn"), f);
            }
        }
    }

    fn visit_tensors_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Vec<f64>)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = join(prefix, &format!("block{}", i + 1));
            b.deconv.visit_tensors_mut(&join(&p, "deconv"), f);
            if let Some(bn) = b.bn.as_mut() {
                bn.visit_tensors_mut(&join(&p, "bn"), f);
            }
        }
    }
}

/// A pure code, a disparity code, and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    pub z: Vec<f64>,
}

impl LatentCode {
    pub fn compose(gamma: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        if gamma.len() != delta.len() {
            return Err(Error::Shape(format!(
                "pure code has {} entries, disparity code {}",
                gamma.len(),
                delta.len()
            )));
        }
        let z = gamma.iter().zip(&delta).map(|(g, d)| g + d).collect();
        Ok(LatentCode { gamma, delta, z })
    }
}

/// Pure encoder `phi`, disparity encoder `eta`, decoder `theta` and the
/// multi-class discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct SaaeModel {
    pub meta: ModelMeta,
    pub phi: Encoder,
    pub eta: Encoder,
    pub theta: Decoder,
    pub disc: Linear,
}

/// Builds the standard model for `(window_len, channels)` windows and
/// `classes` activities.
pub fn build_model(window_len: usize, channels: usize, classes: usize, seed: u64) -> Result<SaaeModel> {
    SaaeModel::build(ModelMeta::new(window_len, channels, classes, Architecture::standard())?, seed)
}

impl SaaeModel {
    pub fn build(meta: ModelMeta, seed: u64) -> Result<Self> {
        // re-validate in case the meta was assembled by hand
        let checked = ModelMeta::new(meta.window_len, meta.channels, meta.classes, meta.architecture.clone())?;
        if checked != meta {
            return Err(Error::Config("model meta is inconsistent with its architecture".into()));
        }
        let mut root = ChaCha8Rng::seed_from_u64(seed);
        let mut phi_rng = ChaCha8Rng::seed_from_u64(root.next_u64());
        let mut eta_rng = ChaCha8Rng::seed_from_u64(root.next_u64());
        let mut theta_rng = ChaCha8Rng::seed_from_u64(root.next_u64());
        let mut disc_rng = ChaCha8Rng::seed_from_u64(root.next_u64());
        Ok(SaaeModel {
            phi: Encoder::new(&meta.architecture, &mut phi_rng),
            eta: Encoder::new(&meta.architecture, &mut eta_rng),
            theta: Decoder::new(&meta, &mut theta_rng),
            disc: Linear::new(meta.latent_dim, meta.classes, 1.0, &mut disc_rng),
            meta,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.meta.latent_dim
    }

    /// Stacks windows into a `[batch][1][T][Ch]` map, checking their shape.
    pub fn input_map(&self, windows: &[&SignalWindow]) -> Result<FeatureMap> {
        let (t, ch) = (self.meta.window_len, self.meta.channels);
        let mut data = Vec::with_capacity(windows.len() * t * ch);
        for w in windows {
            if w.len != t || w.channels != ch {
                return Err(Error::Shape(format!(
                    "model expects ({t}, {ch}) windows, got ({}, {})",
                    w.len, w.channels
                )));
            }
            data.extend_from_slice(&w.data);
        }
        Ok(FeatureMap::from_vec(windows.len(), 1, t, ch, data))
    }

    fn rows(flat: Vec<f64>, dim: usize) -> Vec<Vec<f64>> {
        flat.chunks_exact(dim).map(<[f64]>::to_vec).collect()
    }

    /// Pure codes `gamma` for a batch (inference mode).
    pub fn encode_pure(&self, windows: &[&SignalWindow]) -> Result<Vec<Vec<f64>>> {
        let x = self.input_map(windows)?;
        Ok(Self::rows(self.phi.forward_eval(&x).data, self.latent_dim()))
    }

    /// Disparity codes `delta` for a batch (inference mode).
    pub fn encode_disparity(&self, windows: &[&SignalWindow]) -> Result<Vec<Vec<f64>>> {
        let x = self.input_map(windows)?;
        Ok(Self::rows(self.eta.forward_eval(&x).data, self.latent_dim()))
    }

    pub fn latent_codes(&self, windows: &[&SignalWindow]) -> Result<Vec<LatentCode>> {
        let g = self.encode_pure(windows)?;
        let d = self.encode_disparity(windows)?;
        g.into_iter().zip(d).map(|(g, d)| LatentCode::compose(g, d)).collect()
    }

    /// Reconstructs `(T, Ch)` windows, time-major, from latent codes.
    pub fn decode(&self, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let dim = self.latent_dim();
        if let Some(bad) = z.iter().find(|row| row.len() != dim) {
            return Err(Error::Shape(format!("latent code has {} entries, expected {dim}", bad.len())));
        }
        let flat: Vec<f64> = z.iter().flatten().copied().collect();
        let out = self.theta.forward_eval(&flat, self.meta.channels);
        Ok(Self::rows(out.data, self.meta.window_len * self.meta.channels))
    }

    pub fn logits(&self, latent: &[f64]) -> Vec<f64> {
        self.disc.forward(latent)
    }

    /// Class probabilities for one latent code.
    pub fn discriminate(&self, latent: &[f64]) -> Result<Vec<f64>> {
        if latent.len() != self.latent_dim() {
            return Err(Error::Shape(format!(
                "latent code has {} entries, expected {}",
                latent.len(),
                self.latent_dim()
            )));
        }
        Ok(softmax(&self.logits(latent)))
    }

    /// Class ids (1-based) predicted from the pure code.
    pub fn predict(&self, windows: &[&SignalWindow]) -> Result<Vec<u32>> {
        self.encode_pure(windows)?
            .iter()
            .map(|g| self.discriminate(g).map(|p| argmax(&p) as u32 + 1))
            .collect()
    }

    /// Class ids predicted from the disparity code.
    pub fn predict_from_disparity(&self, windows: &[&SignalWindow]) -> Result<Vec<u32>> {
        self.encode_disparity(windows)?
            .iter()
            .map(|d| self.discriminate(d).map(|p| argmax(&p) as u32 + 1))
            .collect()
    }

    /// Visits every tensor of the four networks under `phi.`, `eta.`,
    /// `theta.` and `disc.`.
    pub fn visit_tensors(&self, f: &mut dyn FnMut(String, &[f64])) {
        self.phi.visit_tensors("phi", f);
        self.eta.visit_tensors("eta", f);
        self.theta.visit_tensors("theta", f);
        self.disc.visit_tensors("disc", f);
    }

    pub fn visit_tensors_mut(&mut self, f: &mut dyn FnMut(String, &mut Vec<f64>)) {
        self.phi.visit_tensors_mut("phi", f);
        self.eta.visit_tensors_mut("eta", f);
        self.theta.visit_tensors_mut("theta", f);
        self.disc.visit_tensors_mut("disc", f);
    }

    pub fn zero_grad(&mut self) {
        self.phi.zero_grad();
        self.eta.zero_grad();
        self.theta.zero_grad();
        self.disc.zero_grad();
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
