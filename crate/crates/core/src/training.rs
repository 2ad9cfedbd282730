//! Loss functions and the interleaved optimization loop.
//!
//! One iteration on a minibatch runs, in order:
//!
//! 1. amplitude spectra with both normalizations;
//! 2. one guide step on random spectrum pairs (skipped without guidance);
//! 3. per-sample weights (mean guide score) and per-class weights;
//! 4. one step on the pure encoder and decoder, reconstructing from
//!    `gamma + delta` with `delta` held constant;
//! 5. one ascent step on the pure encoder and discriminator, then one
//!    descent step on the disparity encoder.
//!
//! Each parameter group keeps its own Adam state.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::SignalWindow;
use crate::error::{Error, Result};
use crate::network::{argmax, EncoderCache, ModelMeta, SaaeModel};
use crate::nn::{softmax, Adam, AdamConfig, FeatureMap, Module, Param};
use crate::spectrum::{class_weights, update_guide, SpectrumAnalyzer, SpectrumGuide, SpectrumRecord};

/// Floor applied inside every logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr_spectrum: f64,
    pub lr_aae: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub u_frac: f64,
    pub i_frac: f64,
    pub alpha: f64,
    /// `false` trains the unguided ablation: every weight is 1.
    pub spectrum_enabled: bool,
    /// Train the disparity encoder to raise `log D_c(delta)` instead of
    /// lowering `log(1 - D_c(delta))`.
    pub non_saturating: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 10,
            lr_spectrum: 1e-4,
            lr_aae: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            u_frac: 0.2,
            i_frac: 0.5,
            alpha: 1.0,
            spectrum_enabled: true,
            non_saturating: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults with the model learning rate used for `dataset`.
    pub fn for_dataset(dataset: &str) -> Self {
        let mut c = TrainConfig::default();
        if dataset.eq_ignore_ascii_case("pamap2") {
            c.lr_aae = 5e-5;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(self.lr_spectrum > 0.0 && self.lr_aae > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.u_frac > 0.0 && self.i_frac > 0.0 && self.u_frac + self.i_frac < 1.0) {
            return bad(format!(
                "need 0 < u_frac, 0 < i_frac, u_frac + i_frac < 1; got {} and {}",
                self.u_frac, self.i_frac
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

/// Metrics of one optimization iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub epoch: usize,
    /// Guide pair loss; absent without guidance.
    pub l_s: Option<f64>,
    pub l_rec: f64,
    pub l_pur: f64,
    pub l_dis: f64,
    /// Discriminator accuracy on the pure codes of the minibatch.
    pub disc_acc: f64,
    pub mean_weight: f64,
    pub class_weights: BTreeMap<u32, f64>,
}

pub const HISTORY_KEYS: [&str; 6] = ["l_s", "l_rec", "l_pur", "l_dis", "disc_acc", "mean_weight"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<HistoryRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Raw series for one of [`HISTORY_KEYS`]. Iterations without a guide
    /// loss are skipped for `l_s`.
    pub fn series(&self, key: &str) -> Result<Vec<f64>> {
        let pick: fn(&HistoryRecord) -> Option<f64> = match key {
            "l_s" => |r| r.l_s,
            "l_rec" => |r| Some(r.l_rec),
            "l_pur" => |r| Some(r.l_pur),
            "l_dis" => |r| Some(r.l_dis),
            "disc_acc" => |r| Some(r.disc_acc),
            "mean_weight" => |r| Some(r.mean_weight),
            _ => {
                return Err(Error::UnknownKey {
                    key: key.to_string(),
                    known: HISTORY_KEYS.iter().map(|k| k.to_string()).collect(),
                })
            }
        };
        Ok(self.records.iter().filter_map(pick).collect())
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: HistoryRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("history line {}: {e}", i + 1)))?;
            records.push(r);
        }
        Ok(TrainHistory { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// `weight` times the mean squared error.
pub fn reconstruction_loss(x: &[f64], x_hat: &[f64], weight: f64) -> Result<f64> {
    if x.len() != x_hat.len() || x.is_empty() {
        return Err(Error::Shape(format!(
            "reconstruction of {} values against {} targets",
            x_hat.len(),
            x.len()
        )));
    }
    let sse: f64 = x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(weight * sse / x.len() as f64)
}

fn class_index(label: u32, classes: usize) -> Result<usize> {
    if label == 0 || label as usize > classes {
        return Err(Error::Data(format!("label {label} outside 1..={classes}")));
    }
    Ok(label as usize - 1)
}

fn weight_of(weights: &BTreeMap<u32, f64>, label: u32) -> Result<f64> {
    weights
        .get(&label)
        .copied()
        .ok_or_else(|| Error::Data(format!("no class weight for label {label}")))
}

/// `log p_c`, floored.
fn log_true(p: &[f64], c: usize) -> f64 {
    p[c].max(LOG_FLOOR).ln()
}

/// Probability mass outside class `c`, summed directly so that it stays
/// accurate when `p_c` is close to 1.
fn rest_mass(p: &[f64], c: usize) -> f64 {
    p.iter().enumerate().filter(|&(j, _)| j != c).map(|(_, v)| v).sum()
}

/// `log(1 - p_c)`, floored.
fn log_false(p: &[f64], c: usize) -> f64 {
    rest_mass(p, c).max(LOG_FLOOR).ln()
}

/// Adds `scale * d log p_c / d logits` to `out`.
fn grad_log_true(p: &[f64], c: usize, scale: f64, out: &mut [f64]) {
    if p[c] <= LOG_FLOOR {
        return;
    }
    for (j, (o, &pj)) in out.iter_mut().zip(p).enumerate() {
        *o += scale * (if j == c { 1.0 } else { 0.0 } - pj);
    }
}

/// Adds `scale * d log(1 - p_c) / d logits` to `out`.
fn grad_log_false(p: &[f64], c: usize, scale: f64, out: &mut [f64]) {
    let rest = rest_mass(p, c);
    if rest <= LOG_FLOOR {
        return;
    }
    for (j, (o, &pj)) in out.iter_mut().zip(p).enumerate() {
        *o += scale * if j == c { -p[c] } else { p[c] * pj / rest };
    }
}

fn check_batch(rows: &[Vec<f64>], labels: &[u32]) -> Result<()> {
    if rows.len() != labels.len() || rows.is_empty() {
        return Err(Error::Shape(format!("{} codes for {} labels", rows.len(), labels.len())));
    }
    Ok(())
}

/// Quantity to maximize over the pure encoder and discriminator: mean of
/// `w_c [log D_c(gamma) + log(1 - D_c(delta))]`.
pub fn pure_loss(
    gamma: &[Vec<f64>],
    delta: &[Vec<f64>],
    labels: &[u32],
    class_weights: &BTreeMap<u32, f64>,
    model: &SaaeModel,
) -> Result<f64> {
    check_batch(gamma, labels)?;
    check_batch(delta, labels)?;
    let mut total = 0.0;
    for ((g, d), &y) in gamma.iter().zip(delta).zip(labels) {
        let c = class_index(y, model.meta.classes)?;
        let w = weight_of(class_weights, y)?;
        total += w * (log_true(&model.discriminate(g)?, c) + log_false(&model.discriminate(d)?, c));
    }
    Ok(total / labels.len() as f64)
}

/// Quantity to minimize over the disparity encoder: mean of
/// `w_c log(1 - D_c(delta))`.
pub fn disparity_loss(
    delta: &[Vec<f64>],
    labels: &[u32],
    class_weights: &BTreeMap<u32, f64>,
    model: &SaaeModel,
) -> Result<f64> {
    check_batch(delta, labels)?;
    let mut total = 0.0;
    for (d, &y) in delta.iter().zip(labels) {
        let c = class_index(y, model.meta.classes)?;
        total += weight_of(class_weights, y)? * log_false(&model.discriminate(d)?, c);
    }
    Ok(total / labels.len() as f64)
}

/// Mean of `w_c log D_c(delta)`, the non-saturating counterpart (maximized).
pub fn disparity_loss_non_saturating(
    delta: &[Vec<f64>],
    labels: &[u32],
    class_weights: &BTreeMap<u32, f64>,
    model: &SaaeModel,
) -> Result<f64> {
    check_batch(delta, labels)?;
    let mut total = 0.0;
    for (d, &y) in delta.iter().zip(labels) {
        let c = class_index(y, model.meta.classes)?;
        total += weight_of(class_weights, y)? * log_true(&model.discriminate(d)?, c);
    }
    Ok(total / labels.len() as f64)
}

/// Disparity codes with the batch-statistics cache they came from.
pub struct DisparityPass {
    delta: FeatureMap,
    cache: EncoderCache,
}

impl DisparityPass {
    pub fn new(model: &SaaeModel, x: &FeatureMap) -> Self {
        let (delta, cache) = model.eta.forward_train(x);
        DisparityPass { delta, cache }
    }
}

fn rows_of(flat: &[f64], dim: usize) -> impl Iterator<Item = &[f64]> {
    flat.chunks_exact(dim)
}

fn nonfinite(stage: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            stage,
            detail: format!("loss evaluated to {value}"),
        })
    }
}

/// Weighted reconstruction loss of `decode(gamma + delta)`; accumulates its
/// gradient into the pure encoder and the decoder only.
pub fn reconstruction_objective(
    model: &mut SaaeModel,
    x: &FeatureMap,
    eta: &DisparityPass,
    weights: &[f64],
    track: bool,
) -> Result<f64> {
    let (gamma, phi_cache) = model.phi.forward_train(x);
    let z: Vec<f64> = gamma.data.iter().zip(&eta.delta.data).map(|(g, d)| g + d).collect();
    let (x_hat, theta_cache) = model.theta.forward_train(&z, x.width);
    let per = x.sample_len();
    if weights.len() != x.batch {
        return Err(Error::Shape(format!("{} weights for a batch of {}", weights.len(), x.batch)));
    }
    let mut loss = 0.0;
    let mut d_out = FeatureMap::zeros(x.batch, 1, x.time, x.width);
    let norm = (x.batch * per) as f64;
    for (b, &w) in weights.iter().enumerate() {
        let xs = x.sample(b);
        let hs = x_hat.sample(b);
        let ds = &mut d_out.data[b * per..(b + 1) * per];
        for ((d, &xv), &hv) in ds.iter_mut().zip(xs).zip(hs) {
            let r = hv - xv;
            loss += w * r * r;
            *d = 2.0 * w * r / norm;
        }
    }
    let loss = nonfinite("reconstruction", loss / norm)?;
    let d_z = model.theta.backward(&theta_cache, &d_out);
    model.phi.backward(&phi_cache, &d_z);
    if track {
        model.phi.track(&phi_cache);
        model.theta.track(&theta_cache);
    }
    Ok(loss)
}

/// Pure objective with its gradient (scaled by `scale`) accumulated into the
/// pure encoder and the discriminator. Returns the objective and the
/// discriminator accuracy on the pure codes.
pub fn purification_objective(
    model: &mut SaaeModel,
    x: &FeatureMap,
    eta: &DisparityPass,
    labels: &[u32],
    class_weights: &BTreeMap<u32, f64>,
    scale: f64,
) -> Result<(f64, f64)> {
    let dim = model.latent_dim();
    let classes = model.meta.classes;
    let (gamma, phi_cache) = model.phi.forward_train(x);
    let n = labels.len();
    let mut d_gamma = vec![0.0; gamma.data.len()];
    let mut total = 0.0;
    let mut hits = 0usize;
    for (i, ((g, d), &y)) in rows_of(&gamma.data, dim)
        .zip(rows_of(&eta.delta.data, dim))
        .zip(labels)
        .enumerate()
    {
        let c = class_index(y, classes)?;
        let w = weight_of(class_weights, y)?;
        let pg = softmax(&model.disc.forward(g));
        let pd = softmax(&model.disc.forward(d));
        if argmax(&pg) == c {
            hits += 1;
        }
        total += w * (log_true(&pg, c) + log_false(&pd, c));
        let s = scale * w / n as f64;
        let mut dlg = vec![0.0; classes];
        grad_log_true(&pg, c, s, &mut dlg);
        let mut dld = vec![0.0; classes];
        grad_log_false(&pd, c, s, &mut dld);
        let dg = model.disc.backward(g, &dlg);
        model.disc.backward(d, &dld);
        d_gamma[i * dim..(i + 1) * dim].copy_from_slice(&dg);
    }
    let value = nonfinite("purification", total / n as f64)?;
    model.phi.backward(&phi_cache, &d_gamma);
    Ok((value, hits as f64 / n as f64))
}

/// Disparity objective with its gradient (scaled by `scale`) accumulated
/// into the disparity encoder. The discriminator's gradient buffers are
/// touched as a side effect and should be cleared before its next step.
pub fn disparity_objective(
    model: &mut SaaeModel,
    eta: &DisparityPass,
    labels: &[u32],
    class_weights: &BTreeMap<u32, f64>,
    non_saturating: bool,
    scale: f64,
) -> Result<f64> {
    let dim = model.latent_dim();
    let classes = model.meta.classes;
    let n = labels.len();
    let mut d_delta = vec![0.0; eta.delta.data.len()];
    let mut total = 0.0;
    for (i, (d, &y)) in rows_of(&eta.delta.data, dim).zip(labels).enumerate() {
        let c = class_index(y, classes)?;
        let w = weight_of(class_weights, y)?;
        let p = softmax(&model.disc.forward(d));
        let s = scale * w / n as f64;
        let mut dl = vec![0.0; classes];
        if non_saturating {
            total += w * log_true(&p, c);
            grad_log_true(&p, c, s, &mut dl);
        } else {
            total += w * log_false(&p, c);
            grad_log_false(&p, c, s, &mut dl);
        }
        let dd = model.disc.backward(d, &dl);
        d_delta[i * dim..(i + 1) * dim].copy_from_slice(&dd);
    }
    let value = nonfinite("disparity", total / n as f64)?;
    model.eta.backward(&eta.cache, &d_delta);
    Ok(value)
}

/// Sub-steps of one iteration, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Guide updated and weights computed.
    Guide,
    /// Pure encoder and decoder updated.
    Reconstruction,
    /// Pure encoder and discriminator updated.
    Purification,
    /// Disparity encoder updated.
    Disparity,
}

/// Named random streams derived from one seed.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const STREAM_INIT: u64 = 1;
const STREAM_GUIDE: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_PAIRS: u64 = 4;

/// Model, guide, optimizer states and random streams of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: SaaeModel,
    pub guide: SpectrumGuide,
    pub history: TrainHistory,
    opt_rec: Adam,
    opt_pur: Adam,
    opt_dis: Adam,
    opt_guide: Adam,
    analyzer: SpectrumAnalyzer,
    shuffle_rng: ChaCha8Rng,
    pair_rng: ChaCha8Rng,
    iteration: usize,
    epoch: usize,
}

impl Trainer {
    pub fn new(meta: ModelMeta, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut init = stream(config.seed, STREAM_INIT);
        let model = SaaeModel::build(meta, rand::RngCore::next_u64(&mut init))?;
        let bins = model.meta.channels * crate::spectrum::bins_per_channel(model.meta.window_len);
        let mut guide = SpectrumGuide::new(bins, &mut stream(config.seed, STREAM_GUIDE));
        guide.alpha = config.alpha;
        Self::with_parts(model, guide, config)
    }

    /// Starts from existing parameters, e.g. a pinned guide.
    pub fn with_parts(model: SaaeModel, guide: SpectrumGuide, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let bins = model.meta.channels * crate::spectrum::bins_per_channel(model.meta.window_len);
        if guide.bins() != bins {
            return Err(Error::Shape(format!("guide has {} bins, model windows give {bins}", guide.bins())));
        }
        Ok(Trainer {
            opt_rec: Adam::new(config.adam(config.lr_aae)),
            opt_pur: Adam::new(config.adam(config.lr_aae)),
            opt_dis: Adam::new(config.adam(config.lr_aae)),
            opt_guide: Adam::new(config.adam(config.lr_spectrum)),
            analyzer: SpectrumAnalyzer::new(model.meta.window_len),
            shuffle_rng: stream(config.seed, STREAM_SHUFFLE),
            pair_rng: stream(config.seed, STREAM_PAIRS),
            iteration: 0,
            epoch: 0,
            history: TrainHistory::default(),
            model,
            guide,
            config,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Replaces the guide by one that scores every bin `value`.
    pub fn pin_guide(&mut self, value: f64) {
        let mut g = SpectrumGuide::pinned(self.guide.bins(), value);
        g.alpha = self.guide.alpha;
        self.guide = g;
    }

    /// Amplitude spectra of each window.
    pub fn spectra(&self, windows: &[&SignalWindow]) -> Result<Vec<Vec<f64>>> {
        windows.iter().map(|w| self.analyzer.amplitudes(w)).collect()
    }

    /// One iteration on a minibatch.
    pub fn train_step(&mut self, batch: &[&SignalWindow]) -> Result<HistoryRecord> {
        let amps = self.spectra(batch)?;
        self.step_with_spectra(batch, amps, &mut |_, _| {})
    }

    /// Like [`Trainer::train_step`], showing the model to `observe` after
    /// each parameter update.
    pub fn train_step_observed(
        &mut self,
        batch: &[&SignalWindow],
        observe: &mut dyn FnMut(Phase, &SaaeModel),
    ) -> Result<HistoryRecord> {
        let amps = self.spectra(batch)?;
        self.step_with_spectra(batch, amps, observe)
    }

    fn step_with_spectra(
        &mut self,
        batch: &[&SignalWindow],
        amps: Vec<Vec<f64>>,
        observe: &mut dyn FnMut(Phase, &SaaeModel),
    ) -> Result<HistoryRecord> {
        if batch.len() < 2 {
            return Err(Error::Data(format!("minibatch needs at least 2 windows, got {}", batch.len())));
        }
        let labels: Vec<u32> = batch.iter().map(|w| w.label).collect();
        for &y in &labels {
            class_index(y, self.model.meta.classes)?;
        }
        let x = self.model.input_map(batch)?;

        let (l_s, weights) = if self.config.spectrum_enabled {
            let records = SpectrumRecord::batch(amps, self.config.u_frac, self.config.i_frac)?;
            let l_s = update_guide(&mut self.guide, &mut self.opt_guide, &records, batch.len(), &mut self.pair_rng)?;
            let refs: Vec<&SpectrumRecord> = records.iter().collect();
            let fwd = self.guide.forward(&refs)?;
            let weights: Vec<f64> = (0..batch.len()).map(|i| crate::spectrum::mean(fwd.row(i))).collect();
            (Some(l_s), weights)
        } else {
            (None, vec![1.0; batch.len()])
        };
        let cw = class_weights(&weights, &labels)?;
        observe(Phase::Guide, &self.model);

        let eta = DisparityPass::new(&self.model, &x);

        self.model.zero_grad();
        let l_rec = reconstruction_objective(&mut self.model, &x, &eta, &weights, true)?;
        let (phi, theta) = (&mut self.model.phi, &mut self.model.theta);
        self.opt_rec.step(phi.params_mut().into_iter().chain(theta.params_mut()).collect());
        observe(Phase::Reconstruction, &self.model);

        self.model.zero_grad();
        let (l_pur, disc_acc) = purification_objective(&mut self.model, &x, &eta, &labels, &cw, -1.0)?;
        let (phi, disc) = (&mut self.model.phi, &mut self.model.disc);
        self.opt_pur.step(phi.params_mut().into_iter().chain(disc.params_mut()).collect());
        observe(Phase::Purification, &self.model);

        self.model.zero_grad();
        let ns = self.config.non_saturating;
        let objective = disparity_objective(&mut self.model, &eta, &labels, &cw, ns, if ns { -1.0 } else { 1.0 })?;
        self.opt_dis.step(self.model.eta.params_mut());
        self.model.eta.track(&eta.cache);
        observe(Phase::Disparity, &self.model);
        self.model.zero_grad();
        let l_dis = if ns {
            let dim = self.model.latent_dim();
            let delta: Vec<Vec<f64>> = eta.delta.data.chunks_exact(dim).map(<[f64]>::to_vec).collect();
            disparity_loss(&delta, &labels, &cw, &self.model)?
        } else {
            objective
        };

        self.iteration += 1;
        let record = HistoryRecord {
            iteration: self.iteration,
            epoch: self.epoch,
            l_s,
            l_rec,
            l_pur,
            l_dis,
            disc_acc,
            mean_weight: crate::spectrum::mean(&weights),
            class_weights: cw,
        };
        self.history.records.push(record.clone());
        Ok(record)
    }

    /// Shuffled minibatch index lists for one epoch. A trailing batch of a
    /// single window joins the previous batch.
    pub fn epoch_batches(&mut self, n: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.shuffle_rng);
        let mut batches: Vec<Vec<usize>> = order.chunks(self.config.batch_size).map(<[usize]>::to_vec).collect();
        if batches.len() > 1 && batches.last().map(Vec::len) == Some(1) {
            let tail = batches.pop().unwrap();
            batches.last_mut().unwrap().extend(tail);
        }
        batches
    }

    /// Runs `config.max_epochs` epochs over `windows`.
    pub fn fit(&mut self, windows: &[SignalWindow]) -> Result<()> {
        self.fit_with(windows, |_| true)
    }

    /// Like [`Trainer::fit`], calling `on_step` after every iteration; a
    /// `false` return stops training early.
    pub fn fit_with(&mut self, windows: &[SignalWindow], mut on_step: impl FnMut(&HistoryRecord) -> bool) -> Result<()> {
        if windows.len() < 2 {
            return Err(Error::Data(format!("training split needs at least 2 windows, got {}", windows.len())));
        }
        let refs: Vec<&SignalWindow> = windows.iter().collect();
        let amps = self.spectra(&refs)?;
        for _ in 0..self.config.max_epochs {
            self.epoch += 1;
            for idx in self.epoch_batches(windows.len()) {
                let batch: Vec<&SignalWindow> = idx.iter().map(|&i| &windows[i]).collect();
                let batch_amps = idx.iter().map(|&i| amps[i].clone()).collect();
                let rec = self.step_with_spectra(&batch, batch_amps, &mut |_, _| {})?;
                if !on_step(&rec) {
                    return Ok(());
                }
            }
        }
        Ok(())
    }
}

/// Result of a complete training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SaaeModel,
    pub guide: SpectrumGuide,
    pub history: TrainHistory,
}

/// Trains a standard-architecture model on `windows`.
pub fn train(windows: &[SignalWindow], classes: usize, config: &TrainConfig) -> Result<TrainOutcome> {
    let first = windows
        .first()
        .ok_or_else(|| Error::Data("training split is empty".into()))?;
    let meta = ModelMeta::new(first.len, first.channels, classes, crate::network::Architecture::standard())?;
    let mut trainer = Trainer::new(meta, config.clone())?;
    trainer.fit(windows)?;
    Ok(TrainOutcome {
        model: trainer.model,
        guide: trainer.guide,
        history: trainer.history,
    })
}

/// Trains the unguided ablation and a guided run whose guide is pinned to
/// 1 for `steps` iterations from the same seed. Returns true when every
/// tensor of the two models ends up bit-identical.
pub fn equivalence_check(windows: &[SignalWindow], meta: ModelMeta, config: &TrainConfig, steps: usize) -> Result<bool> {
    let run = |guided: bool| -> Result<SaaeModel> {
        let cfg = TrainConfig {
            spectrum_enabled: guided,
            max_epochs: usize::MAX,
            ..config.clone()
        };
        let mut t = Trainer::new(meta.clone(), cfg)?;
        if guided {
            t.pin_guide(1.0);
        }
        t.fit_with(windows, |r| r.iteration < steps)?;
        Ok(t.model)
    };
    let (a, b) = (run(false)?, run(true)?);
    let bits = |m: &SaaeModel| {
        let mut out = Vec::new();
        m.visit_tensors(&mut |name, v| out.push((name, v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>())));
        out
    };
    Ok(bits(&a) == bits(&b))
}

/// Every trainable tensor of the four networks, in a fixed order.
pub fn model_params_mut(model: &mut SaaeModel) -> Vec<&mut Param> {
    let mut v = model.phi.params_mut();
    v.extend(model.eta.params_mut());
    v.extend(model.theta.params_mut());
    v.extend(model.disc.params_mut());
    v
}
