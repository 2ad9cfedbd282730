use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use saae::datasets::{
    load_dataset, load_windows, segment, DatasetSpec, Layout, SignalWindow, SynthConfig, WindowCache,
};
use saae::spectrum::amplitude_spectrum;
use saae::Error;

/// Value written at 1-based `col` of row `row` for `subject`; lets tests
/// check which column ended up in which channel.
fn cell(subject: u32, row: usize, col: usize) -> f64 {
    subject as f64 * 1000.0 + row as f64 + col as f64 / 1000.0
}

fn write_table(path: &Path, subject: u32, cols: usize, label_col: usize, labels: &[i64], sep: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    let mut text = String::new();
    for (r, &l) in labels.iter().enumerate() {
        let row: Vec<String> = (1..=cols)
            .map(|c| if c == label_col { l.to_string() } else { format!("{}", cell(subject, r, c)) })
            .collect();
        writeln!(text, "{}", row.join(sep)).unwrap();
    }
    fs::write(path, text).unwrap();
}

fn with_subjects(mut spec: DatasetSpec, keep: &[u32]) -> DatasetSpec {
    match &mut spec.layout {
        Layout::PerSubject { subjects, .. } | Layout::SegmentTree { subjects, .. } => *subjects = keep.to_vec(),
    }
    spec
}

fn run(label: i64, n: usize) -> Vec<i64> {
    vec![label; n]
}

#[test]
fn mhealth_logs_become_windows() {
    let dir = tempfile::tempdir().unwrap();
    let spec = with_subjects(DatasetSpec::builtin("mhealth").unwrap(), &[1, 2]);
    let labels: Vec<i64> = [run(0, 10), run(1, 40), run(2, 40)].concat();
    for s in [1, 2] {
        write_table(&dir.path().join(format!("mHealth_subject{s}.log")), s, 24, 24, &labels, "\t");
    }
    let windows = load_windows("mhealth", dir.path(), Some(&spec), 20, 0.5).unwrap();
    // 80 labelled rows in one recording: starts 0..=60 step 10, the one at 30 mixes labels
    assert_eq!(windows.len(), 12);
    assert_eq!(windows.iter().filter(|w| w.label == 2).count(), 6);
    let first = &windows[0];
    assert_eq!((first.subject, first.channels, first.label), (1, 23, 1));
    // null rows are dropped, so the first window starts at file row 10
    assert_eq!(first.at(0, 0), cell(1, 10, 1));
    assert_eq!(first.at(19, 22), cell(1, 29, 23));
}

#[test]
fn pamap2_gaps_exclusions_and_label_map() {
    let dir = tempfile::tempdir().unwrap();
    let spec = with_subjects(DatasetSpec::builtin("pamap2").unwrap(), &[101]);
    let labels: Vec<i64> = [run(1, 30), run(9, 5), run(24, 30)].concat();
    let path = dir.path().join("Protocol/subject101.dat");
    write_table(&path, 101, 54, 2, &labels, " ");
    // a 3-row gap in channel column 5 (first channel) and a 10-row gap in column 6
    let mut lines: Vec<Vec<String>> = fs::read_to_string(&path)
        .unwrap()
        .lines()
        .map(|l| l.split(' ').map(String::from).collect())
        .collect();
    for line in &mut lines[5..8] {
        line[4] = "NaN".into();
    }
    for line in &mut lines[40..50] {
        line[5] = "NaN".into();
    }
    fs::write(&path, lines.iter().map(|l| l.join(" ")).collect::<Vec<_>>().join("\n")).unwrap();

    let recs = load_dataset("pamap2", dir.path(), Some(&spec)).unwrap();
    // label 9 splits the file, the long gap splits the second part
    let lens: Vec<usize> = recs.iter().map(|r| r.len()).collect();
    assert_eq!(lens, [30, 5, 15]);
    assert!(recs[0].labels.iter().all(|&l| l == 1));
    assert!(recs[1].labels.iter().chain(&recs[2].labels).all(|&l| l == 12));
    // interpolated values lie on the line between the neighbours
    let ch = recs[0].channels;
    let (a, b) = (cell(101, 4, 5), cell(101, 8, 5));
    for (k, r) in (5..8).enumerate() {
        let got = recs[0].data[r * ch];
        assert!((got - (a + (b - a) * (k + 1) as f64 / 4.0)).abs() < 1e-9);
    }
    assert!(recs.iter().all(|r| r.data.iter().all(|v| v.is_finite())));
}

#[test]
fn ucidsads_classes_come_from_paths() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = with_subjects(DatasetSpec::builtin("ucidsads").unwrap(), &[3]);
    if let Layout::SegmentTree { segments, .. } = &mut spec.layout {
        *segments = 2;
    }
    for class in 1..=19u32 {
        for seg in 1..=2 {
            let path = dir.path().join(format!("a{class:02}/p3/s{seg:02}.txt"));
            write_table(&path, 3, 45, usize::MAX, &run(0, 125), ",");
        }
    }
    let windows = load_windows("ucidsads", dir.path(), Some(&spec), 20, 0.5).unwrap();
    // 125 rows give 11 windows per segment file
    assert_eq!(windows.len(), 19 * 2 * 11);
    for class in 1..=19 {
        assert_eq!(windows.iter().filter(|w| w.label == class).count(), 22);
    }
    assert!(windows.iter().all(|w| w.channels == 45 && w.subject == 3));
}

#[test]
fn opportunity_skips_absent_subjects_but_not_all() {
    let dir = tempfile::tempdir().unwrap();
    let spec = DatasetSpec::builtin("opportunity").unwrap();
    let code_of = |id: u32| -> i64 { spec.labels.iter().find(|(_, &v)| v == id).unwrap().0.parse().unwrap() };
    let labels: Vec<i64> = [run(0, 5), run(code_of(1), 25), run(code_of(17), 25)].concat();
    for f in ["ADL1", "ADL2", "ADL3", "ADL4", "ADL5", "Drill"] {
        write_table(&dir.path().join(format!("S2-{f}.dat")), 2, 250, 250, &labels, " ");
    }
    let recs = load_dataset("opportunity", dir.path(), None).unwrap();
    assert_eq!(recs.len(), 6);
    assert!(recs.iter().all(|r| r.subject == 2 && r.channels == 81));
    let ids: std::collections::BTreeSet<u32> = recs.iter().flat_map(|r| r.labels.iter().copied()).collect();
    assert_eq!(ids.into_iter().collect::<Vec<_>>(), [1, 17]);

    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(load_dataset("opportunity", empty.path(), None), Err(Error::MissingFiles { .. })));
}

#[test]
fn missing_files_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    write_table(&dir.path().join("mHealth_subject1.log"), 1, 24, 24, &run(1, 30), " ");
    let err = load_dataset("mhealth", dir.path(), None).unwrap_err();
    assert_eq!(err.code(), "E_MISSING");
    let Error::MissingFiles { expected, .. } = &err else { unreachable!() };
    assert_eq!(expected.len(), 9);
    assert!(expected.contains(&"mHealth_subject10.log".to_string()));
    assert!(err.to_string().contains("mHealth_subject2.log"));
}

#[test]
fn unknown_label_codes_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = with_subjects(DatasetSpec::builtin("mhealth").unwrap(), &[1]);
    write_table(&dir.path().join("mHealth_subject1.log"), 1, 24, 24, &[run(1, 5), run(42, 5)].concat(), " ");
    let err = load_dataset("mhealth", dir.path(), Some(&spec)).unwrap_err();
    assert!(matches!(&err, Error::UnknownLabel { code, .. } if code == "42"), "{err}");
    assert!(DatasetSpec::builtin("nope").is_err());
}

#[test]
fn short_rows_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = with_subjects(DatasetSpec::builtin("mhealth").unwrap(), &[1]);
    fs::write(dir.path().join("mHealth_subject1.log"), "1 2 3\n").unwrap();
    assert_eq!(load_dataset("mhealth", dir.path(), Some(&spec)).unwrap_err().code(), "E_FORMAT");
}

#[test]
fn loading_and_caching_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = with_subjects(DatasetSpec::builtin("mhealth").unwrap(), &[1, 2]);
    for s in [1, 2] {
        write_table(&dir.path().join(format!("mHealth_subject{s}.log")), s, 24, 24, &run(3, 60), " ");
    }
    let a = load_windows("mhealth", dir.path(), Some(&spec), 20, 0.5).unwrap();
    let b = load_windows("mhealth", dir.path(), Some(&spec), 20, 0.5).unwrap();
    assert_eq!(a, b);
    let ca = WindowCache::new("mhealth", 12, a).unwrap();
    let cb = WindowCache::new("mhealth", 12, b).unwrap();
    assert_eq!(ca.digest(), cb.digest());
    let path = dir.path().join("cache.bin");
    ca.save(&path).unwrap();
    let back = WindowCache::load(&path).unwrap();
    assert_eq!(back.digest(), ca.digest());
    assert_eq!(back.windows.len(), 10);
}

#[test]
fn synthetic_classes_peak_at_their_bins() {
    let cfg = SynthConfig {
        subject_shift: 0.0,
        snr_db: 20.0,
        windows_per_cell: 10,
        ..SynthConfig::default()
    };
    let windows = cfg.generate().unwrap();
    let half = cfg.window_len / 2 + 1;
    for w in &windows {
        let amps = amplitude_spectrum(w).unwrap();
        for c in 0..w.channels {
            let ch = &amps[c * half..(c + 1) * half];
            let peak = (1..half).max_by(|&a, &b| ch[a].total_cmp(&ch[b])).unwrap();
            assert_eq!(peak, cfg.class_bin(w.label), "class {} channel {c}", w.label);
        }
    }
}

// raw samples, no spectral invariance: the plainest classifier input
fn features(w: &SignalWindow) -> Vec<f64> {
    w.data.clone()
}

fn nearest_centroid_accuracy(train: &[&SignalWindow], test: &[&SignalWindow], classes: u32) -> f64 {
    let centroids: Vec<Vec<f64>> = (1..=classes)
        .map(|c| {
            let members: Vec<Vec<f64>> = train.iter().filter(|w| w.label == c).map(|w| features(w)).collect();
            let mut mean = vec![0.0; members[0].len()];
            for m in &members {
                mean.iter_mut().zip(m).for_each(|(a, b)| *a += b / members.len() as f64);
            }
            mean
        })
        .collect();
    let hits = test
        .iter()
        .filter(|w| {
            let f = features(w);
            let dist = |c: &Vec<f64>| c.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            let best = (0..centroids.len()).min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b]))).unwrap();
            best as u32 + 1 == w.label
        })
        .count();
    hits as f64 / test.len() as f64
}

#[test]
fn synthetic_subjects_shift_the_distribution() {
    for seed in 0..6 {
        let cfg = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        let windows = cfg.generate().unwrap();
        let last = cfg.subjects as u32;
        let mine: Vec<&SignalWindow> = windows.iter().filter(|w| w.subject == last).collect();
        let others: Vec<&SignalWindow> = windows.iter().filter(|w| w.subject != last).collect();
        let fit: Vec<&SignalWindow> = mine.iter().step_by(2).copied().collect();
        let probe: Vec<&SignalWindow> = mine.iter().skip(1).step_by(2).copied().collect();
        let (a_within, a_held) = (
            nearest_centroid_accuracy(&fit, &probe, cfg.classes as u32),
            nearest_centroid_accuracy(&others, &probe, cfg.classes as u32),
        );
        assert!(a_held < a_within, "seed {seed}: held-out {a_held} vs within-subject {a_within}");
    }
}

#[test]
fn segment_counts() {
    let rec = saae::datasets::Recording::new(1, "r", 1, (0..100).map(f64::from).collect(), vec![1; 100]).unwrap();
    assert_eq!(segment(&rec, 20, 0.5).unwrap().len(), 9);
    assert_eq!(segment(&rec, 20, 0.0).unwrap().len(), 5);
    assert_eq!(segment(&rec, 101, 0.5).unwrap().len(), 0);
    assert!(segment(&rec, 20, 1.0).is_err());
}
