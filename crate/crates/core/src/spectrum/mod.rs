//! Frequency-domain view of signal windows.
//!
//! A window's amplitude spectrum is the concatenation, in channel order, of
//! the one-sided DFT magnitudes of each channel (`len / 2 + 1` bins per
//! channel). Spectra are rescaled two ways before scoring: row-wise within a
//! spectrum (`intra`) and column-wise across a batch (`inter`). The
//! intra-normalized form also decides which bins count as information (the
//! highest-amplitude fraction) and which count as noise (the lowest).

mod guide;

pub use guide::{
    class_weights, sample_pairs, score, spectrum_pair_loss, update_guide, GuideForward, SpectrumGuide,
};

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::datasets::SignalWindow;
use crate::error::{Error, Result};

/// Rows or columns whose range is below this are treated as flat.
pub const DEGENERATE_RANGE: f64 = 1e-12;
pub const DEFAULT_INFO_FRACTION: f64 = 0.2;
pub const DEFAULT_NOISE_FRACTION: f64 = 0.5;

/// Number of one-sided bins kept for a length-`len` channel.
pub fn bins_per_channel(len: usize) -> usize {
    len / 2 + 1
}

/// Plans one FFT for a fixed window length and reuses it.
#[derive(Clone)]
pub struct SpectrumAnalyzer {
    len: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectrumAnalyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumAnalyzer").field("len", &self.len).finish()
    }
}

impl SpectrumAnalyzer {
    pub fn new(len: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(len);
        SpectrumAnalyzer { len, fft }
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    pub fn amplitudes(&self, window: &SignalWindow) -> Result<Vec<f64>> {
        if window.len != self.len {
            return Err(Error::Shape(format!(
                "analyzer planned for length {}, window has {}",
                self.len, window.len
            )));
        }
        if window.len < 2 {
            return Err(Error::Data("amplitude spectrum needs at least 2 time steps".into()));
        }
        if !window.is_finite() {
            return Err(Error::Data(format!(
                "non-finite sample in window (subject {}, label {})",
                window.subject, window.label
            )));
        }
        let bins = bins_per_channel(self.len);
        let mut out = Vec::with_capacity(bins * window.channels);
        let mut buf = vec![Complex::new(0.0, 0.0); self.len];
        for c in 0..window.channels {
            for (slot, v) in buf.iter_mut().zip(window.channel(c)) {
                *slot = Complex::new(v, 0.0);
            }
            self.fft.process(&mut buf);
            out.extend(buf[..bins].iter().map(|z| z.norm()));
        }
        Ok(out)
    }
}

/// One-sided amplitude spectrum of every channel, concatenated.
pub fn amplitude_spectrum(window: &SignalWindow) -> Result<Vec<f64>> {
    SpectrumAnalyzer::new(window.len).amplitudes(window)
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn check_rectangular(batch: &[Vec<f64>]) -> Result<usize> {
    let m = batch.first().map(Vec::len).unwrap_or(0);
    if batch.iter().any(|row| row.len() != m) {
        return Err(Error::Shape("spectra in a batch must share one length".into()));
    }
    Ok(m)
}

/// Min-max rescales each spectrum over its own bins. Flat rows map to zeros.
pub fn normalize_intra(batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if batch.is_empty() {
        return Err(Error::Data("cannot normalize an empty batch".into()));
    }
    check_rectangular(batch)?;
    Ok(batch.iter().map(|row| normalize_row(row)).collect())
}

pub(crate) fn normalize_row(row: &[f64]) -> Vec<f64> {
    let (lo, hi) = min_max(row.iter().copied());
    let range = hi - lo;
    if !(range > DEGENERATE_RANGE) {
        return vec![0.0; row.len()];
    }
    row.iter().map(|&v| ((v - lo) / range).clamp(0.0, 1.0)).collect()
}

/// Min-max rescales each frequency column across the batch. Flat columns
/// map to zeros.
pub fn normalize_inter(batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if batch.len() < 2 {
        return Err(Error::Data(format!(
            "inter-spectrum normalization needs a batch of at least 2 spectra, got {}; use a larger batch",
            batch.len()
        )));
    }
    let m = check_rectangular(batch)?;
    let mut out = vec![vec![0.0; m]; batch.len()];
    for j in 0..m {
        let (lo, hi) = min_max(batch.iter().map(|row| row[j]));
        let range = hi - lo;
        if !(range > DEGENERATE_RANGE) {
            continue;
        }
        for (dst, row) in out.iter_mut().zip(batch) {
            dst[j] = ((row[j] - lo) / range).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Information and noise bin sets with the default fractions.
pub fn select_sets(intra_norm: &[f64]) -> Result<(Vec<usize>, Vec<usize>)> {
    select_sets_with(intra_norm, DEFAULT_INFO_FRACTION, DEFAULT_NOISE_FRACTION)
}

/// `ceil(info_fraction * m)` highest bins and `floor(noise_fraction * m)`
/// lowest bins; ties go to the lower index, and the noise set skips bins
/// already taken by the information set. Both sets come back sorted.
pub fn select_sets_with(intra_norm: &[f64], info_fraction: f64, noise_fraction: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    let m = intra_norm.len();
    if m < 4 {
        return Err(Error::Data(format!("need at least 4 frequency bins to select sets, got {m}")));
    }
    let (n_info, n_noise) = set_sizes(m, info_fraction, noise_fraction)?;
    if n_info == 0 || n_noise == 0 {
        return Err(Error::Config(format!(
            "fractions {info_fraction}/{noise_fraction} leave an empty set for {m} bins"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| intra_norm[b].total_cmp(&intra_norm[a]).then(a.cmp(&b)));
    let mut info: Vec<usize> = order[..n_info].to_vec();
    let mut taken = vec![false; m];
    info.iter().for_each(|&i| taken[i] = true);

    order.sort_by(|&a, &b| intra_norm[a].total_cmp(&intra_norm[b]).then(a.cmp(&b)));
    let mut noise: Vec<usize> = order.into_iter().filter(|&i| !taken[i]).take(n_noise).collect();
    info.sort_unstable();
    noise.sort_unstable();
    Ok((info, noise))
}

pub(crate) fn set_sizes(m: usize, info_fraction: f64, noise_fraction: f64) -> Result<(usize, usize)> {
    if !(info_fraction > 0.0 && noise_fraction > 0.0 && info_fraction + noise_fraction < 1.0) {
        return Err(Error::Config(format!(
            "set fractions must be positive and sum below 1, got {info_fraction} and {noise_fraction}"
        )));
    }
    // guard against 0.2 * 10 = 2.0000000000000004
    let n_info = (info_fraction * m as f64 - 1e-9).ceil().max(0.0) as usize;
    let n_noise = (noise_fraction * m as f64 + 1e-9).floor() as usize;
    if n_info + n_noise > m {
        return Err(Error::Config(format!("sets of {n_info} and {n_noise} do not fit in {m} bins")));
    }
    Ok((n_info, n_noise))
}

/// A spectrum with both normalized forms and its bin sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRecord {
    pub amps: Vec<f64>,
    pub intra_norm: Vec<f64>,
    pub inter_norm: Vec<f64>,
    pub info_set: Vec<usize>,
    pub noise_set: Vec<usize>,
}

impl SpectrumRecord {
    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn inter_mean(&self) -> f64 {
        mean(&self.inter_norm)
    }

    /// Builds records for a batch; the inter-normalized form depends on the
    /// whole batch.
    pub fn batch(amps: Vec<Vec<f64>>, info_fraction: f64, noise_fraction: f64) -> Result<Vec<SpectrumRecord>> {
        let intra = normalize_intra(&amps)?;
        let inter = normalize_inter(&amps)?;
        amps.into_iter()
            .zip(intra)
            .zip(inter)
            .map(|((amps, intra_norm), inter_norm)| {
                let (info_set, noise_set) = select_sets_with(&intra_norm, info_fraction, noise_fraction)?;
                Ok(SpectrumRecord {
                    amps,
                    intra_norm,
                    inter_norm,
                    info_set,
                    noise_set,
                })
            })
            .collect()
    }

    pub fn batch_default(amps: Vec<Vec<f64>>) -> Result<Vec<SpectrumRecord>> {
        Self::batch(amps, DEFAULT_INFO_FRACTION, DEFAULT_NOISE_FRACTION)
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Mean of `values` over the listed indices.
pub fn set_mean(values: &[f64], set: &[usize]) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    set.iter().map(|&i| values[i]).sum::<f64>() / set.len() as f64
}
