//! Leave-one-subject-out comparison of the guided model and the unguided
//! ablation on a small synthetic corpus.
//!
//!     cargo run --release --example loso_benchmark
//!
//! When the guide's weights come out nearly uniform the two tables barely
//! differ: Adam ignores a constant rescaling of the loss.

use saae::datasets::{loso_splits, SignalWindow, SynthConfig};
use saae::evaluation::{MetricsReport, SubjectReport};
use saae::training::{train, TrainConfig};

fn main() -> saae::Result<()> {
    let synth = SynthConfig {
        subjects: 4,
        windows_per_cell: 15,
        seed: 2,
        ..SynthConfig::default()
    };
    let windows = synth.generate()?;
    for guided in [true, false] {
        let config = TrainConfig {
            batch_size: 32,
            max_epochs: 15,
            spectrum_enabled: guided,
            seed: 1,
            ..TrainConfig::default()
        };
        let mut reports = Vec::new();
        for fold in loso_splits(&windows)? {
            let fold = fold?;
            let outcome = train(&fold.train, synth.classes, &config)?;
            let test: Vec<&SignalWindow> = fold.test.iter().collect();
            let labels: Vec<u32> = test.iter().map(|w| w.label).collect();
            let preds = outcome.model.predict(&test)?;
            reports.push(SubjectReport::new(fold.subject, &preds, &labels, synth.classes)?);
        }
        println!("{}", if guided { "SAAE" } else { "iAAE (no spectrum guide)" });
        print!("{}", MetricsReport::new(reports)?.to_table());
        println!();
    }
    Ok(())
}
