use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;

use super::{mean, set_mean, SpectrumRecord};
use crate::error::{Error, Result};
use crate::nn::{join, relu_backward, relu_inplace, sigmoid, Adam, Linear, Module, Param};

/// Trainable per-frequency scoring head.
///
/// Input is `[intra_norm ; inter_norm]` (length `2m`), then an affine map to
/// `2m` with a rectifier, an affine map to `m`, and a logistic squash. A
/// guide can also be pinned to a constant output, which turns every
/// spectrum weight into that constant.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGuide {
    bins: usize,
    pub stage1: Linear,
    pub stage2: Linear,
    pinned: Option<f64>,
    /// Expected ratio between score gaps and inter-normalized amplitude gaps.
    pub alpha: f64,
}

/// Activations kept from a batched forward pass.
#[derive(Debug, Clone)]
pub struct GuideForward {
    input: Vec<f64>,
    hidden: Vec<f64>,
    /// `[batch][bins]` scores in (0, 1).
    pub scores: Vec<f64>,
    bins: usize,
}

impl GuideForward {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.bins..(i + 1) * self.bins]
    }
}

#[inline]
fn squash(x: f64) -> f64 {
    // keep the open interval even where the logistic rounds to 0 or 1
    sigmoid(x).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl SpectrumGuide {
    pub fn new<R: Rng + ?Sized>(bins: usize, rng: &mut R) -> Self {
        SpectrumGuide {
            bins,
            stage1: Linear::new(2 * bins, 2 * bins, std::f64::consts::SQRT_2, rng),
            stage2: Linear::new(2 * bins, bins, 1.0, rng),
            pinned: None,
            alpha: 1.0,
        }
    }

    /// All parameters zero: every score is exactly 0.5.
    pub fn zeros(bins: usize) -> Self {
        SpectrumGuide {
            bins,
            stage1: Linear::zeros(2 * bins, 2 * bins),
            stage2: Linear::zeros(2 * bins, bins),
            pinned: None,
            alpha: 1.0,
        }
    }

    /// A guide whose every score is `value`, regardless of input.
    pub fn pinned(bins: usize, value: f64) -> Self {
        SpectrumGuide {
            pinned: Some(value),
            ..Self::zeros(bins)
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn pinned_value(&self) -> Option<f64> {
        self.pinned
    }

    fn check(&self, rec: &SpectrumRecord) -> Result<()> {
        if rec.intra_norm.len() != self.bins || rec.inter_norm.len() != self.bins {
            return Err(Error::Shape(format!(
                "guide expects {} bins, record has {}",
                self.bins,
                rec.intra_norm.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, records: &[&SpectrumRecord]) -> Result<GuideForward> {
        for r in records {
            self.check(r)?;
        }
        let m = self.bins;
        if let Some(v) = self.pinned {
            return Ok(GuideForward {
                input: Vec::new(),
                hidden: Vec::new(),
                scores: vec![v; records.len() * m],
                bins: m,
            });
        }
        let mut input = Vec::with_capacity(records.len() * 2 * m);
        for r in records {
            input.extend_from_slice(&r.intra_norm);
            input.extend_from_slice(&r.inter_norm);
        }
        let mut hidden = self.stage1.forward(&input);
        relu_inplace(&mut hidden);
        let mut scores = self.stage2.forward(&hidden);
        scores.iter_mut().for_each(|s| *s = squash(*s));
        Ok(GuideForward {
            input,
            hidden,
            scores,
            bins: m,
        })
    }

    /// Accumulates parameter gradients given `d_scores` (same layout as
    /// `fwd.scores`).
    pub fn backward(&mut self, fwd: &GuideForward, d_scores: &[f64]) {
        if self.pinned.is_some() {
            return;
        }
        let d_logits: Vec<f64> = fwd
            .scores
            .iter()
            .zip(d_scores)
            .map(|(&s, &g)| g * s * (1.0 - s))
            .collect();
        let mut d_hidden = self.stage2.backward(&fwd.hidden, &d_logits);
        relu_backward(&fwd.hidden, &mut d_hidden);
        self.stage1.backward(&fwd.input, &d_hidden);
    }

    /// Mean pair loss over `pairs`, with gradients of that mean accumulated
    /// into the parameters.
    pub fn pair_objective(&mut self, batch: &[SpectrumRecord], pairs: &[(usize, usize)]) -> Result<f64> {
        if pairs.is_empty() {
            return Ok(0.0);
        }
        let refs: Vec<&SpectrumRecord> = batch.iter().collect();
        let fwd = self.forward(&refs)?;
        let m = self.bins;
        let mut d_scores = vec![0.0; fwd.scores.len()];
        let scale = 1.0 / pairs.len() as f64;
        let mut total = 0.0;
        for &(a, b) in pairs {
            let (ra, rb) = (&batch[a], &batch[b]);
            let (sa, sb) = (fwd.row(a), fwd.row(b));
            let (loss, residual) = pair_terms(sa, sb, ra, rb, self.alpha);
            total += loss;
            let sign = if residual > 0.0 {
                1.0
            } else if residual < 0.0 {
                -1.0
            } else {
                0.0
            };
            for (idx, rec, dir) in [(a, ra, sign), (b, rb, -sign)] {
                let row = &mut d_scores[idx * m..(idx + 1) * m];
                for &i in &rec.noise_set {
                    row[i] += scale / rec.noise_set.len() as f64;
                }
                for &i in &rec.info_set {
                    row[i] -= scale / rec.info_set.len() as f64;
                }
                for g in row.iter_mut() {
                    *g += scale * dir / m as f64;
                }
            }
        }
        self.backward(&fwd, &d_scores);
        Ok(total * scale)
    }
}

impl Module for SpectrumGuide {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.stage1.params_mut();
        v.extend(self.stage2.params_mut());
        v
    }

    fn params(&self) -> Vec<&Param> {
        let mut v = self.stage1.params();
        v.extend(self.stage2.params());
        v
    }

    fn visit_tensors(&self, prefix: &str, f: &mut dyn FnMut(String, &[f64])) {
        self.stage1.visit_tensors(&join(prefix, "stage1"), f);
        self.stage2.visit_tensors(&join(prefix, "stage2"), f);
    }

    fn visit_tensors_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Vec<f64>)) {
        self.stage1.visit_tensors_mut(&join(prefix, "stage1"), f);
        self.stage2.visit_tensors_mut(&join(prefix, "stage2"), f);
    }
}

/// Returns the pair loss and the residual inside its absolute value.
fn pair_terms(sa: &[f64], sb: &[f64], ra: &SpectrumRecord, rb: &SpectrumRecord, alpha: f64) -> (f64, f64) {
    let contrast = set_mean(sa, &ra.noise_set) - set_mean(sa, &ra.info_set) + set_mean(sb, &rb.noise_set)
        - set_mean(sb, &rb.info_set)
        + 2.0;
    let residual = mean(sa) - mean(sb) - alpha * (ra.inter_mean() - rb.inter_mean());
    (contrast + residual.abs(), residual)
}

/// Per-bin scores and their mean for one record.
pub fn score(guide: &SpectrumGuide, rec: &SpectrumRecord) -> Result<(Vec<f64>, f64)> {
    let fwd = guide.forward(&[rec])?;
    let m = mean(&fwd.scores);
    Ok((fwd.scores, m))
}

/// Contrast between noise and information bins of both spectra, plus the
/// mismatch between the score gap and the inter-normalized amplitude gap.
pub fn spectrum_pair_loss(guide: &SpectrumGuide, a: &SpectrumRecord, b: &SpectrumRecord) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("pair spectra differ in length: {} vs {}", a.len(), b.len())));
    }
    let fwd = guide.forward(&[a, b])?;
    Ok(pair_terms(fwd.row(0), fwd.row(1), a, b, guide.alpha).0)
}

/// Draws `count` unordered index pairs from `0..n`: without replacement
/// while enough distinct pairs exist, with replacement otherwise.
pub fn sample_pairs<R: Rng + ?Sized>(n: usize, count: usize, rng: &mut R) -> Vec<(usize, usize)> {
    if n < 2 || count == 0 {
        return Vec::new();
    }
    let total = n * (n - 1) / 2;
    if count <= total {
        index::sample(rng, total, count)
            .into_iter()
            .map(|k| pair_at(k, n))
            .collect()
    } else {
        (0..count)
            .map(|_| {
                let a = rng.random_range(0..n);
                let mut b = rng.random_range(0..n - 1);
                if b >= a {
                    b += 1;
                }
                (a.min(b), a.max(b))
            })
            .collect()
    }
}

/// `k`-th pair `(i, j)`, `i < j`, in row-major order over the upper triangle.
fn pair_at(mut k: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    while k >= n - 1 - i {
        k -= n - 1 - i;
        i += 1;
    }
    (i, i + 1 + k)
}

/// One optimization step on the guide from `pair_count` random pairs of
/// `batch`. Returns the mean pair loss measured before the step.
pub fn update_guide<R: Rng + ?Sized>(
    guide: &mut SpectrumGuide,
    optimizer: &mut Adam,
    batch: &[SpectrumRecord],
    pair_count: usize,
    rng: &mut R,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Data("spectrum guide update needs a non-empty batch".into()));
    }
    if batch.len() < 2 {
        return Err(Error::Data("spectrum guide update needs at least 2 spectra to form pairs".into()));
    }
    if pair_count == 0 {
        return Ok(0.0);
    }
    let pairs = sample_pairs(batch.len(), pair_count, rng);
    guide.zero_grad();
    let loss = guide.pair_objective(batch, &pairs)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            stage: "spectrum guide update",
            detail: format!("pair loss {loss}"),
        });
    }
    if guide.pinned.is_none() {
        optimizer.step(guide.params_mut());
    }
    Ok(loss)
}

/// Mean sample weight per class present in the batch.
pub fn class_weights(sample_weights: &[f64], labels: &[u32]) -> Result<BTreeMap<u32, f64>> {
    if sample_weights.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} weights for {} labels",
            sample_weights.len(),
            labels.len()
        )));
    }
    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for (&w, &c) in sample_weights.iter().zip(labels) {
        let e = sums.entry(c).or_insert((0.0, 0));
        e.0 += w;
        e.1 += 1;
    }
    Ok(sums.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AdamConfig;
    use crate::spectrum::select_sets;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(intra: Vec<f64>, inter: Vec<f64>) -> SpectrumRecord {
        let (info_set, noise_set) = select_sets(&intra).unwrap();
        SpectrumRecord {
            amps: intra.clone(),
            intra_norm: intra,
            inter_norm: inter,
            info_set,
            noise_set,
        }
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<SpectrumRecord> {
        let amps: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| rng.random_range(0.0..5.0)).collect())
            .collect();
        SpectrumRecord::batch_default(amps).unwrap()
    }

    #[test]
    fn zero_guide_scores_one_half() {
        let g = SpectrumGuide::zeros(10);
        let r = record((0..10).map(|i| i as f64 / 9.0).collect(), vec![0.3; 10]);
        let (per, m) = score(&g, &r).unwrap();
        assert!(per.iter().all(|&s| s == 0.5));
        assert_eq!(m, 0.5);
    }

    #[test]
    fn zero_guide_pair_loss_is_two_and_a_half() {
        let g = SpectrumGuide::zeros(10);
        let intra: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let a = record(intra.clone(), vec![0.8; 10]);
        let b = record(intra, vec![0.3; 10]);
        let l = spectrum_pair_loss(&g, &a, &b).unwrap();
        assert!((l - 2.5).abs() < 1e-12, "{l}");
        assert_eq!(spectrum_pair_loss(&g, &b, &a).unwrap(), l);
    }

    #[test]
    fn ideal_scores_give_zero_loss() {
        // evaluate the loss terms directly on hand-built ideal score vectors
        let intra: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let a = record(intra.clone(), vec![0.5; 10]);
        let b = record(intra, vec![0.5; 10]);
        let ideal: Vec<f64> = (0..10)
            .map(|i| if a.info_set.contains(&i) { 1.0 } else if a.noise_set.contains(&i) { 0.0 } else { 0.4 })
            .collect();
        let (loss, residual) = pair_terms(&ideal, &ideal, &a, &b, 1.0);
        assert_eq!(residual, 0.0);
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let g = SpectrumGuide::zeros(8);
        let r = record(vec![0.0, 0.1, 0.2, 0.3, 1.0], vec![0.0; 5]);
        assert!(score(&g, &r).is_err());
    }

    #[test]
    fn pair_sampling_is_distinct_when_possible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs = sample_pairs(6, 15, &mut rng);
        let mut sorted = pairs.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 15);
        assert!(pairs.iter().all(|&(a, b)| a < b && b < 6));
        // more pairs than exist falls back to replacement
        assert_eq!(sample_pairs(3, 10, &mut rng).len(), 10);
    }

    #[test]
    fn pair_index_enumerates_upper_triangle() {
        let n = 5;
        let all: Vec<_> = (0..n * (n - 1) / 2).map(|k| pair_at(k, n)).collect();
        let expected: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        assert_eq!(all, expected);
    }

    #[test]
    fn zero_pairs_leave_guide_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let batch = random_batch(&mut rng, 4, 10);
        let mut g = SpectrumGuide::new(10, &mut rng);
        let before = g.clone();
        let mut adam = Adam::new(AdamConfig::with_lr(1e-3));
        assert_eq!(update_guide(&mut g, &mut adam, &batch, 0, &mut rng).unwrap(), 0.0);
        assert_eq!(g, before);
        assert!(update_guide(&mut g, &mut adam, &[], 3, &mut rng).is_err());
    }

    #[test]
    fn update_is_reproducible_under_a_seed() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let batch = random_batch(&mut rng, 8, 12);
            let mut g = SpectrumGuide::new(12, &mut rng);
            let mut adam = Adam::new(AdamConfig::with_lr(1e-3));
            for _ in 0..5 {
                update_guide(&mut g, &mut adam, &batch, 8, &mut rng).unwrap();
            }
            g
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn class_weight_examples() {
        assert_eq!(class_weights(&[0.4, 0.6], &[2, 2]).unwrap(), BTreeMap::from([(2, 0.5)]));
        let w = class_weights(&[0.2, 0.4, 0.9], &[1, 1, 3]).unwrap();
        assert!((w[&1] - 0.3).abs() < 1e-12);
        assert_eq!(w[&3], 0.9);
        assert_eq!(w.len(), 2);
        assert_eq!(class_weights(&[0.7, 0.1], &[1, 2]).unwrap(), BTreeMap::from([(1, 0.7), (2, 0.1)]));
    }
}
