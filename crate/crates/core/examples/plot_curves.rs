//! Trains briefly, then renders every loss curve and the confusion matrix
//! of the held-out subject.
//!
//!     cargo run --release --example plot_curves [out_dir]

use std::path::PathBuf;

use saae::datasets::{holdout_split, SignalWindow, SynthConfig};
use saae::evaluation::{curve_extract, SubjectReport};
use saae::plot::{render_confusion, render_curve, save_png};
use saae::training::{train, TrainConfig, HISTORY_KEYS};

fn main() -> saae::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("saae-curves"));
    std::fs::create_dir_all(&out)?;
    let synth = SynthConfig {
        subjects: 3,
        windows_per_cell: 20,
        ..SynthConfig::default()
    };
    let fold = holdout_split(&synth.generate()?, 3)?;
    let config = TrainConfig {
        batch_size: 16,
        max_epochs: 8,
        ..TrainConfig::default()
    };
    let outcome = train(&fold.train, synth.classes, &config)?;
    let history_path = out.join("history.jsonl");
    outcome.history.save(&history_path)?;

    for curve in curve_extract(&outcome.history, &HISTORY_KEYS, 20)? {
        let path = out.join(format!("{}.png", curve.key));
        save_png(&render_curve(&curve), &path)?;
        let (first, last) = (curve.smoothed[0], curve.smoothed[curve.smoothed.len() - 1]);
        println!("{:12} {first:8.4} -> {last:8.4}  {}", curve.key, path.display());
    }

    let test: Vec<&SignalWindow> = fold.test.iter().collect();
    let labels: Vec<u32> = test.iter().map(|w| w.label).collect();
    let report = SubjectReport::new(fold.subject, &outcome.model.predict(&test)?, &labels, synth.classes)?;
    save_png(&render_confusion(&report.confusion)?, &out.join("confusion.png"))?;
    println!("accuracy {:.3}; confusion matrix in {}", report.metrics.accuracy, out.join("confusion.png").display());
    Ok(())
}
