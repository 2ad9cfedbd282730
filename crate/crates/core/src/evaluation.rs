//! Classification metrics, per-subject aggregation, curve smoothing and
//! latent-code export.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datasets::SignalWindow;
use crate::error::{Error, Result};
use crate::network::SaaeModel;
use crate::training::TrainHistory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Macro average over the classes that occur in labels or predictions.
    pub precision: f64,
    pub f1: f64,
    pub support: usize,
    /// Labels contain a single class, so the macro averages say little.
    pub degenerate: bool,
}

fn check_ids(preds: &[u32], labels: &[u32], classes: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::Data("metrics need at least one prediction".into()));
    }
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    if let Some(bad) = preds.iter().chain(labels).find(|&&c| c == 0 || c as usize > classes) {
        return Err(Error::Data(format!("class id {bad} outside 1..={classes}")));
    }
    Ok(())
}

/// Rows are true classes, columns predictions; index `c - 1` for class `c`.
pub fn confusion_matrix(preds: &[u32], labels: &[u32], classes: usize) -> Result<Vec<Vec<usize>>> {
    check_ids(preds, labels, classes)?;
    let mut m = vec![vec![0; classes]; classes];
    for (&p, &l) in preds.iter().zip(labels) {
        m[l as usize - 1][p as usize - 1] += 1;
    }
    Ok(m)
}

pub fn metrics(preds: &[u32], labels: &[u32], classes: usize) -> Result<Metrics> {
    let cm = confusion_matrix(preds, labels, classes)?;
    let present: BTreeSet<u32> = preds.iter().chain(labels).copied().collect();
    let correct: usize = (0..classes).map(|c| cm[c][c]).sum();
    let (mut precision, mut f1) = (0.0, 0.0);
    for &c in &present {
        let i = c as usize - 1;
        let tp = cm[i][i] as f64;
        let predicted: usize = cm.iter().map(|row| row[i]).sum();
        let support: usize = cm[i].iter().sum();
        let p = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
        let r = if support > 0 { tp / support as f64 } else { 0.0 };
        precision += p;
        f1 += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    let k = present.len() as f64;
    let distinct_labels: BTreeSet<u32> = labels.iter().copied().collect();
    Ok(Metrics {
        accuracy: correct as f64 / labels.len() as f64,
        precision: precision / k,
        f1: f1 / k,
        support: labels.len(),
        degenerate: distinct_labels.len() < 2,
    })
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("cannot aggregate zero values".into()));
        }
        if values.iter().all(|&v| v == values[0]) {
            return Ok(MeanStd { mean: values[0], std: 0.0 });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(MeanStd { mean, std: var.sqrt() })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3}({:.3})", self.mean, self.std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub accuracy: MeanStd,
    pub precision: MeanStd,
    pub f1: MeanStd,
}

pub fn aggregate(reports: &[Metrics]) -> Result<Aggregate> {
    let col = |f: fn(&Metrics) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(Aggregate {
        accuracy: col(|m| m.accuracy)?,
        precision: col(|m| m.precision)?,
        f1: col(|m| m.f1)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub subject: u32,
    pub metrics: Metrics,
    pub confusion: Vec<Vec<usize>>,
}

impl SubjectReport {
    pub fn new(subject: u32, preds: &[u32], labels: &[u32], classes: usize) -> Result<Self> {
        Ok(SubjectReport {
            subject,
            metrics: metrics(preds, labels, classes)?,
            confusion: confusion_matrix(preds, labels, classes)?,
        })
    }
}

/// Per-subject results of a leave-one-subject-out run plus their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub subjects: Vec<SubjectReport>,
    pub summary: Aggregate,
}

impl MetricsReport {
    pub fn new(mut subjects: Vec<SubjectReport>) -> Result<Self> {
        subjects.sort_by_key(|s| s.subject);
        let summary = aggregate(&subjects.iter().map(|s| s.metrics).collect::<Vec<_>>())?;
        Ok(MetricsReport { subjects, summary })
    }

    /// One row per subject and a final `mean(std)` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject,accuracy,precision,f1\n");
        for s in &self.subjects {
            let m = &s.metrics;
            let _ = writeln!(out, "{},{:.4},{:.4},{:.4}", s.subject, m.accuracy, m.precision, m.f1);
        }
        let a = &self.summary;
        let _ = writeln!(out, "mean(std),{},{},{}", a.accuracy, a.precision, a.f1);
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<10} {:>14} {:>14} {:>14}\n", "subject", "accuracy", "precision", "f1");
        for s in &self.subjects {
            let m = &s.metrics;
            let flag = if m.degenerate { " *" } else { "" };
            let _ = writeln!(
                out,
                "{:<10} {:>14.3} {:>14.3} {:>14.3}{flag}",
                s.subject, m.accuracy, m.precision, m.f1
            );
        }
        let a = &self.summary;
        let _ = writeln!(
            out,
            "{:<10} {:>14} {:>14} {:>14}",
            "mean(std)",
            a.accuracy.to_string(),
            a.precision.to_string(),
            a.f1.to_string()
        );
        out
    }
}

/// Trailing moving average: entry `i` averages the last `window` values
/// up to and including `i`.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::Config("smoothing window must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for i in 0..series.len() {
        sum += series[i];
        if i >= window {
            sum -= series[i - window];
        }
        let n = window.min(i + 1);
        out.push(if window == 1 { series[i] } else { sum / n as f64 });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub key: String,
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
}

pub fn curve_extract(history: &TrainHistory, keys: &[&str], smoothing_window: usize) -> Result<Vec<Curve>> {
    keys.iter()
        .map(|&key| {
            let raw = history.series(key)?;
            let smoothed = moving_average(&raw, smoothing_window)?;
            Ok(Curve {
                key: key.to_string(),
                raw,
                smoothed,
            })
        })
        .collect()
}

/// Writes pure codes as text: a `#` header, then one line per window with
/// the subject, the label and the code values, separated by spaces.
pub fn write_embeddings<W: Write>(model: &SaaeModel, windows: &[SignalWindow], mut out: W) -> Result<()> {
    writeln!(out, "# subject label gamma[0..{}]", model.latent_dim())?;
    for chunk in windows.chunks(256) {
        let refs: Vec<&SignalWindow> = chunk.iter().collect();
        for (w, g) in chunk.iter().zip(model.encode_pure(&refs)?) {
            let mut line = format!("{} {}", w.subject, w.label);
            for v in g {
                let _ = write!(line, " {v}");
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

pub fn export_embeddings(model: &SaaeModel, windows: &[SignalWindow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_embeddings(model, windows, &mut f)?;
    f.flush()?;
    Ok(())
}

/// One exported record.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub subject: u32,
    pub label: u32,
    pub gamma: Vec<f64>,
}

pub fn read_embeddings(text: &str) -> Result<Vec<Embedding>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("embedding line {}", i + 1));
        let mut it = line.split(' ');
        let subject = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
        let label = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
        let gamma = it.map(|t| t.parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
        out.push(Embedding { subject, label, gamma });
    }
    Ok(out)
}

/// Projection onto the top two principal axes, found by power iteration
/// with deflation from a fixed start vector.
pub fn pca_2d(rows: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let n = rows.len();
    let d = rows.first().map(Vec::len).unwrap_or(0);
    if n < 2 || d == 0 {
        return Err(Error::Data("projection needs at least 2 non-empty rows".into()));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let centred: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let cov_times = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for r in &centred {
            let p: f64 = r.iter().zip(v).map(|(a, b)| a * b).sum();
            for (o, a) in out.iter_mut().zip(r) {
                *o += p * a;
            }
        }
        out
    };
    let normalize = |v: &mut Vec<f64>| {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
    };
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for k in 0..2 {
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + ((i + k) % 3) as f64).collect();
        normalize(&mut v);
        for _ in 0..200 {
            let mut w = cov_times(&v);
            for a in &axes {
                let p: f64 = w.iter().zip(a).map(|(x, y)| x * y).sum();
                w.iter_mut().zip(a).for_each(|(x, y)| *x -= p * y);
            }
            normalize(&mut w);
            v = w;
        }
        axes.push(v);
    }
    Ok(centred
        .iter()
        .map(|r| {
            let p = |a: &[f64]| r.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
            [p(&axes[0]), p(&axes[1])]
        })
        .collect())
}
