//! Readers for the delimiter-separated text releases of the benchmark
//! datasets, driven by small TOML column maps.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{segment, Recording, SignalWindow};
use crate::error::{Error, Result};

pub const BUILTIN_DATASETS: [&str; 4] = ["mhealth", "pamap2", "ucidsads", "opportunity"];

fn builtin_source(name: &str) -> Option<&'static str> {
    match name {
        "mhealth" => Some(include_str!("../../specs/mhealth.toml")),
        "pamap2" => Some(include_str!("../../specs/pamap2.toml")),
        "ucidsads" => Some(include_str!("../../specs/ucidsads.toml")),
        "opportunity" => Some(include_str!("../../specs/opportunity.toml")),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    Whitespace,
    Comma,
}

/// Where the files live and how subjects and labels are derived from paths.
///
/// Path templates accept `{subject}`, `{class}` and `{segment}`, optionally
/// zero-padded as `{class:02}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// One or more files per subject; labels come from a column.
    PerSubject {
        files: Vec<String>,
        subjects: Vec<u32>,
        /// When false, subjects with missing files are skipped as long as
        /// one complete subject remains.
        #[serde(default = "yes")]
        require_all: bool,
    },
    /// One short file per (class, subject, segment); the class comes from
    /// the path.
    SegmentTree {
        path: String,
        subjects: Vec<u32>,
        segments: u32,
    },
}

fn yes() -> bool {
    true
}

fn default_gap() -> usize {
    5
}

/// Column map for one dataset. Column numbers are 1-based, as in the
/// datasets' own documentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub classes: usize,
    pub delimiter: Delimiter,
    pub channels: Vec<usize>,
    #[serde(default)]
    pub label_column: Option<usize>,
    #[serde(default)]
    pub null_label: Option<i64>,
    #[serde(default)]
    pub exclude_labels: Vec<i64>,
    /// Raw label code (as text) to class id in `1..=classes`.
    #[serde(default)]
    pub labels: BTreeMap<String, u32>,
    /// Longest run of missing values that is bridged by interpolation.
    #[serde(default = "default_gap")]
    pub max_gap: usize,
    pub layout: Layout,
}

impl DatasetSpec {
    pub fn builtin(name: &str) -> Result<Self> {
        let key = name.to_ascii_lowercase();
        let src = builtin_source(&key).ok_or_else(|| {
            Error::Config(format!(
                "unknown dataset `{name}`; expected one of {}",
                BUILTIN_DATASETS.join(", ")
            ))
        })?;
        Self::from_toml(src)
    }

    pub fn from_toml(src: &str) -> Result<Self> {
        let spec: DatasetSpec = toml::from_str(src).map_err(|e| Error::Config(format!("dataset spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("dataset spec `{}`: {m}", self.name)));
        if self.channels.is_empty() || self.channels.contains(&0) {
            return bad("channel columns must be non-empty and 1-based".into());
        }
        match &self.layout {
            Layout::PerSubject { files, subjects, .. } => {
                if self.label_column.is_none_or(|c| c == 0) {
                    return bad("per-subject layout needs a 1-based label_column".into());
                }
                if files.is_empty() || subjects.is_empty() {
                    return bad("per-subject layout needs files and subjects".into());
                }
                let ids: BTreeSet<u32> = self.labels.values().copied().collect();
                if ids.len() != self.classes || ids.iter().any(|&c| c == 0 || c as usize > self.classes) {
                    return bad(format!("label map must cover class ids 1..={} exactly", self.classes));
                }
                for code in self.labels.keys() {
                    if code.parse::<i64>().is_err() {
                        return bad(format!("label code `{code}` is not an integer"));
                    }
                }
            }
            Layout::SegmentTree { subjects, segments, .. } => {
                if subjects.is_empty() || *segments == 0 {
                    return bad("segment layout needs subjects and segments".into());
                }
            }
        }
        Ok(())
    }

    fn label_lookup(&self) -> BTreeMap<i64, u32> {
        self.labels
            .iter()
            .map(|(k, &v)| (k.parse::<i64>().expect("validated"), v))
            .collect()
    }
}

fn fill_template(template: &str, vars: &[(&str, u32)]) -> String {
    let mut out = template.to_string();
    for &(name, value) in vars {
        out = out.replace(&format!("{{{name}:02}}"), &format!("{value:02}"));
        out = out.replace(&format!("{{{name}}}"), &value.to_string());
    }
    out
}

/// Every file the spec expects under `root`, grouped by subject.
fn expected_files(spec: &DatasetSpec) -> Vec<(u32, Option<u32>, String)> {
    match &spec.layout {
        Layout::PerSubject { files, subjects, .. } => subjects
            .iter()
            .flat_map(|&s| files.iter().map(move |f| (s, None, fill_template(f, &[("subject", s)]))))
            .collect(),
        Layout::SegmentTree { path, subjects, segments } => {
            let mut out = Vec::new();
            for class in 1..=spec.classes as u32 {
                for &s in subjects {
                    for seg in 1..=*segments {
                        let p = fill_template(path, &[("class", class), ("subject", s), ("segment", seg)]);
                        out.push((s, Some(class), p));
                    }
                }
            }
            out
        }
    }
}

fn split_line(line: &str, delimiter: Delimiter) -> Vec<&str> {
    match delimiter {
        Delimiter::Whitespace => line.split_whitespace().collect(),
        Delimiter::Comma => line.split(',').map(str::trim).collect(),
    }
}

fn parse_value(token: &str, file: &str, line: usize) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("{file}:{line}: cannot parse `{token}` as a number")))
}

/// Rows of one file: channel values (NaN where missing) and a class id,
/// `None` for rows that are discarded (null or excluded labels).
fn read_rows(spec: &DatasetSpec, path: &Path, fixed_label: Option<u32>) -> Result<Vec<(Vec<f64>, Option<u32>)>> {
    let text = fs::read_to_string(path)?;
    let name = path.display().to_string();
    let lookup = spec.label_lookup();
    let needed = spec
        .channels
        .iter()
        .copied()
        .chain(spec.label_column)
        .max()
        .unwrap_or(0);
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tokens = split_line(line, spec.delimiter);
        if tokens.len() < needed {
            return Err(Error::Format(format!(
                "{name}:{}: {} columns, spec needs {needed}",
                i + 1,
                tokens.len()
            )));
        }
        let values = spec
            .channels
            .iter()
            .map(|&c| parse_value(tokens[c - 1], &name, i + 1))
            .collect::<Result<Vec<f64>>>()?;
        let label = match (fixed_label, spec.label_column) {
            (Some(l), _) => Some(l),
            (None, Some(col)) => {
                let raw = parse_value(tokens[col - 1], &name, i + 1)?;
                if !raw.is_finite() || raw.fract() != 0.0 {
                    return Err(Error::UnknownLabel {
                        code: tokens[col - 1].to_string(),
                        file: name.clone(),
                    });
                }
                let code = raw as i64;
                if spec.null_label == Some(code) || spec.exclude_labels.contains(&code) {
                    None
                } else {
                    Some(*lookup.get(&code).ok_or_else(|| Error::UnknownLabel {
                        code: code.to_string(),
                        file: name.clone(),
                    })?)
                }
            }
            (None, None) => unreachable!("validated"),
        };
        rows.push((values, label));
    }
    Ok(rows)
}

/// Bridges short runs of missing values by linear interpolation and splits
/// the rows into recordings wherever a row is discarded or a gap is too
/// long to bridge.
fn clean_rows(rows: Vec<(Vec<f64>, Option<u32>)>, max_gap: usize, subject: u32, source: &str) -> Result<Vec<Recording>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        if rows[start].1.is_none() {
            start += 1;
            continue;
        }
        let mut end = start;
        while end < rows.len() && rows[end].1.is_some() {
            end += 1;
        }
        let run = &rows[start..end];
        let channels = run[0].0.len();
        let mut usable = vec![true; run.len()];
        let mut values: Vec<Vec<f64>> = run.iter().map(|r| r.0.clone()).collect();
        for c in 0..channels {
            let mut t = 0;
            while t < run.len() {
                if values[t][c].is_finite() {
                    t += 1;
                    continue;
                }
                let gap_start = t;
                while t < run.len() && !values[t][c].is_finite() {
                    t += 1;
                }
                let bridgeable = gap_start > 0 && t < run.len() && t - gap_start <= max_gap;
                if bridgeable {
                    let (a, b) = (values[gap_start - 1][c], values[t][c]);
                    let span = (t - gap_start + 1) as f64;
                    for (k, row) in values[gap_start..t].iter_mut().enumerate() {
                        row[c] = a + (b - a) * (k + 1) as f64 / span;
                    }
                } else {
                    usable[gap_start..t].iter_mut().for_each(|u| *u = false);
                }
            }
        }
        let mut t = 0;
        while t < run.len() {
            if !usable[t] {
                t += 1;
                continue;
            }
            let piece_start = t;
            while t < run.len() && usable[t] {
                t += 1;
            }
            let data = values[piece_start..t].iter().flatten().copied().collect();
            let labels = run[piece_start..t].iter().map(|r| r.1.expect("kept row")).collect();
            out.push(Recording::new(
                subject,
                format!("{source}@{}", start + piece_start + 1),
                channels,
                data,
                labels,
            )?);
        }
        start = end;
    }
    Ok(out)
}

/// Reads every recording of a dataset under `root`, ordered by subject,
/// then file, then row.
pub fn load_dataset(name: &str, root: &Path, spec: Option<&DatasetSpec>) -> Result<Vec<Recording>> {
    let owned;
    let spec = match spec {
        Some(s) => s,
        None => {
            owned = DatasetSpec::builtin(name)?;
            &owned
        }
    };
    let expected = expected_files(spec);
    let missing: Vec<&(u32, Option<u32>, String)> =
        expected.iter().filter(|(_, _, p)| !root.join(p).is_file()).collect();
    let skip: BTreeSet<u32> = match &spec.layout {
        Layout::PerSubject { require_all: false, .. } => missing.iter().map(|m| m.0).collect(),
        _ => BTreeSet::new(),
    };
    let all_subjects: BTreeSet<u32> = expected.iter().map(|e| e.0).collect();
    let strict_missing = match &spec.layout {
        Layout::PerSubject { require_all: false, .. } => skip.len() == all_subjects.len(),
        _ => !missing.is_empty(),
    };
    if strict_missing {
        return Err(Error::MissingFiles {
            root: root.to_path_buf(),
            expected: missing.iter().map(|m| m.2.clone()).collect(),
        });
    }
    let mut keyed: Vec<(u32, usize, PathBuf, Option<u32>, String)> = expected
        .iter()
        .enumerate()
        .filter(|(_, e)| !skip.contains(&e.0))
        .map(|(i, e)| (e.0, i, root.join(&e.2), e.1, e.2.clone()))
        .collect();
    keyed.sort_by_key(|k| (k.0, k.1));
    let mut out = Vec::new();
    for (subject, _, path, class, rel) in keyed {
        let rows = read_rows(spec, &path, class)?;
        out.extend(clean_rows(rows, spec.max_gap, subject, &rel)?);
    }
    Ok(out)
}

/// Loads a dataset and cuts it into labelled windows.
pub fn load_windows(
    name: &str,
    root: &Path,
    spec: Option<&DatasetSpec>,
    window_len: usize,
    overlap: f64,
) -> Result<Vec<SignalWindow>> {
    let mut out = Vec::new();
    for rec in load_dataset(name, root, spec)? {
        out.extend(segment(&rec, window_len, overlap)?);
    }
    Ok(out)
}
