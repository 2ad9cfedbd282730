//! Recordings, windowing, standardization and leave-one-subject-out folds.

mod cache;
mod loader;
mod synth;
mod window;

pub use cache::{WindowCache, CACHE_MAGIC, CACHE_VERSION};
pub use loader::{load_dataset, load_windows, DatasetSpec, Delimiter, Layout, BUILTIN_DATASETS};
pub use synth::{synth_generate, synth_spectra, SynthConfig};
pub use window::SignalWindow;

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_LEN: usize = 20;
pub const DEFAULT_OVERLAP: f64 = 0.5;

/// A continuous stretch of samples from one subject, time-major, with one
/// class label per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject: u32,
    /// Source file and row offset, for diagnostics.
    pub source: String,
    pub channels: usize,
    pub data: Vec<f64>,
    pub labels: Vec<u32>,
}

impl Recording {
    pub fn new(subject: u32, source: impl Into<String>, channels: usize, data: Vec<f64>, labels: Vec<u32>) -> Result<Self> {
        if channels == 0 || data.len() != labels.len() * channels {
            return Err(Error::Shape(format!(
                "recording has {} values for {} steps of {channels} channels",
                data.len(),
                labels.len()
            )));
        }
        Ok(Recording {
            subject,
            source: source.into(),
            channels,
            data,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Step between window starts for a given overlap fraction.
pub fn window_stride(len: usize, overlap: f64) -> usize {
    ((len as f64 * (1.0 - overlap)).round() as usize).max(1)
}

/// Cuts a recording into windows of `len` steps. Windows whose labels are
/// not all equal are dropped; a recording shorter than `len` gives none.
pub fn segment(rec: &Recording, len: usize, overlap: f64) -> Result<Vec<SignalWindow>> {
    if len == 0 {
        return Err(Error::Config("window length must be positive".into()));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::Config(format!("overlap must lie in [0, 1), got {overlap}")));
    }
    let stride = window_stride(len, overlap);
    let ch = rec.channels;
    let mut out = Vec::new();
    let mut start = 0;
    while start + len <= rec.len() {
        let labels = &rec.labels[start..start + len];
        if labels.iter().all(|&l| l == labels[0]) {
            let data = rec.data[start * ch..(start + len) * ch].to_vec();
            out.push(SignalWindow::new(data, len, ch, rec.subject, labels[0])?);
        }
        start += stride;
    }
    Ok(out)
}

/// Distinct subject ids, ascending.
pub fn subjects(windows: &[SignalWindow]) -> Vec<u32> {
    let mut s: Vec<u32> = windows.iter().map(|w| w.subject).collect();
    s.sort_unstable();
    s.dedup();
    s
}

/// Largest label present, which is the class count for 1-based labels.
pub fn class_count(windows: &[SignalWindow]) -> usize {
    windows.iter().map(|w| w.label as usize).max().unwrap_or(0)
}

/// Per-channel mean and standard deviation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Statistics over every time step of every window.
    pub fn fit(windows: &[SignalWindow]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::Data("cannot fit standardization on no windows".into()))?;
        let ch = first.channels;
        let mut sum = vec![0.0; ch];
        let mut count = 0usize;
        for w in windows {
            if w.channels != ch {
                return Err(Error::Shape("windows differ in channel count".into()));
            }
            for row in w.data.chunks_exact(ch) {
                for (s, v) in sum.iter_mut().zip(row) {
                    *s += v;
                }
            }
            count += w.len;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; ch];
        for w in windows {
            for row in w.data.chunks_exact(ch) {
                for ((s, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                // a constant channel is centred but not scaled
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, windows: &mut [SignalWindow]) {
        for w in windows {
            for row in w.data.chunks_exact_mut(self.mean.len()) {
                for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                    *v = (*v - m) / s;
                }
            }
        }
    }
}

/// One leave-one-subject-out fold, standardized with training statistics.
#[derive(Debug, Clone)]
pub struct Fold {
    pub subject: u32,
    pub train: Vec<SignalWindow>,
    pub test: Vec<SignalWindow>,
    pub standardizer: Standardizer,
}

/// Builds the fold holding out `subject`.
pub fn holdout_split(windows: &[SignalWindow], subject: u32) -> Result<Fold> {
    let available = subjects(windows);
    if !available.contains(&subject) {
        return Err(Error::UnknownSubject {
            requested: subject,
            available,
        });
    }
    if available.len() < 2 {
        return Err(Error::Data("leave-one-subject-out needs at least 2 subjects".into()));
    }
    let (mut test, mut train): (Vec<SignalWindow>, Vec<SignalWindow>) =
        windows.iter().cloned().partition(|w| w.subject == subject);
    let standardizer = Standardizer::fit(&train)?;
    standardizer.apply(&mut train);
    standardizer.apply(&mut test);
    Ok(Fold {
        subject,
        train,
        test,
        standardizer,
    })
}

/// Folds in ascending subject order, built lazily.
pub struct LosoSplits<'a> {
    windows: &'a [SignalWindow],
    subjects: std::vec::IntoIter<u32>,
}

impl Iterator for LosoSplits<'_> {
    type Item = Result<Fold>;

    fn next(&mut self) -> Option<Self::Item> {
        self.subjects.next().map(|s| holdout_split(self.windows, s))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.subjects.size_hint()
    }
}

impl ExactSizeIterator for LosoSplits<'_> {}

pub fn loso_splits(windows: &[SignalWindow]) -> Result<LosoSplits<'_>> {
    let s = subjects(windows);
    if s.len() < 2 {
        return Err(Error::Data(format!(
            "leave-one-subject-out needs at least 2 subjects, found {}",
            s.len()
        )));
    }
    Ok(LosoSplits {
        windows,
        subjects: s.into_iter(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(len: usize, label: u32) -> Recording {
        Recording::new(1, "mem", 2, (0..len * 2).map(|v| v as f64).collect(), vec![label; len]).unwrap()
    }

    #[test]
    fn window_counts_follow_stride() {
        assert_eq!(segment(&constant(100, 1), 20, 0.5).unwrap().len(), 9);
        assert_eq!(segment(&constant(20, 1), 20, 0.5).unwrap().len(), 1);
        assert!(segment(&constant(19, 1), 20, 0.5).unwrap().is_empty());
        assert_eq!(segment(&constant(100, 1), 20, 0.0).unwrap().len(), 5);
    }

    #[test]
    fn impure_windows_are_dropped() {
        let mut rec = constant(60, 1);
        for l in &mut rec.labels[35..] {
            *l = 2;
        }
        let ws = segment(&rec, 20, 0.5).unwrap();
        // starts 0, 10, 20, 30, 40: the ones at 20 and 30 straddle step 35
        assert_eq!(ws.iter().map(|w| w.label).collect::<Vec<_>>(), vec![1, 1, 2]);
        assert_eq!(ws[0].at(0, 1), 1.0);
        assert_eq!(ws[2].at(0, 0), 80.0);
    }

    #[test]
    fn bad_overlap_is_a_config_error() {
        assert!(segment(&constant(40, 1), 20, 1.0).is_err());
    }

    fn windows_for(subjects: &[u32]) -> Vec<SignalWindow> {
        subjects
            .iter()
            .flat_map(|&s| {
                (0..3).map(move |i| {
                    let data = (0..8).map(|k| (s * 10 + i + k) as f64).collect();
                    SignalWindow::new(data, 4, 2, s, 1).unwrap()
                })
            })
            .collect()
    }

    #[test]
    fn folds_partition_subjects() {
        let ws = windows_for(&[3, 1, 2]);
        let folds: Vec<Fold> = loso_splits(&ws).unwrap().map(Result::unwrap).collect();
        assert_eq!(folds.iter().map(|f| f.subject).collect::<Vec<_>>(), vec![1, 2, 3]);
        for f in &folds {
            assert!(f.test.iter().all(|w| w.subject == f.subject));
            assert!(f.train.iter().all(|w| w.subject != f.subject));
            assert_eq!(f.train.len() + f.test.len(), ws.len());
        }
    }

    #[test]
    fn standardization_uses_training_split_only() {
        let ws = windows_for(&[1, 2]);
        let fold = holdout_split(&ws, 2).unwrap();
        let train_only: Vec<SignalWindow> = ws.iter().filter(|w| w.subject == 1).cloned().collect();
        assert_eq!(fold.standardizer, Standardizer::fit(&train_only).unwrap());
        let n = fold.train.len() * 4;
        for c in 0..2 {
            let vals: Vec<f64> = fold.train.iter().flat_map(|w| w.channel(c)).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unknown_subject_lists_available() {
        let ws = windows_for(&[1, 2]);
        match holdout_split(&ws, 7) {
            Err(Error::UnknownSubject { available, .. }) => assert_eq!(available, vec![1, 2]),
            other => panic!("{other:?}"),
        }
        assert!(loso_splits(&windows_for(&[4])).is_err());
    }
}
